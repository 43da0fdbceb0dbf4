//! Calculus over zero-mean Gaussian pre-activations: densities, the
//! post-activation variance map, relative entropy to the uniform law, and
//! the `χ` / `χ̃` integrals.
//!
//! Every `∫𝒟z` integral is evaluated in pre-activation space with the
//! [`Quadrature`] passed in (or the default one), never in post-activation
//! space where the tanh density has endpoint singularities at `x = ±1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::activation::{Activation, ActivationKind};
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, Quadrature};

/// Pre-activation variance at which the tanh post-activation distribution
/// is closest to uniform.
pub const SIGMA2_MIN: f64 = PI * PI / 12.0;

/// A centred Gaussian `N(0, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    variance: f64,
}

impl GaussianSpec {
    pub fn new(variance: f64) -> Result<Self> {
        if !variance.is_finite() || variance < 0.0 {
            return Err(Error::InvalidVariance(variance));
        }
        Ok(GaussianSpec { variance })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn mean(&self) -> f64 {
        0.0
    }
}

/// `p(z; σ²) = exp(-z²/2σ²) / √(2πσ²)`.
pub fn pre_density(z: f64, spec: GaussianSpec) -> Result<f64> {
    let v = spec.variance();
    if v == 0.0 {
        return Err(Error::DegenerateDistribution { variance: v });
    }
    Ok((-z * z / (2.0 * v)).exp() / (2.0 * PI * v).sqrt())
}

/// Density of `x = φ(z)` for `z ~ N(0, σ²)` and one-to-one `φ`. For tanh
/// this is `exp(-artanh(x)²/2σ²) / (√(2π) σ (1 - x²))`.
pub fn post_density(x: f64, spec: GaussianSpec, act: &Activation) -> Result<f64> {
    let inverse = match (act.injective, act.inverse) {
        (true, Some(inv)) => inv,
        _ => {
            return Err(Error::UnsupportedActivation {
                name: act.name(),
                reason: "post-activation density requires a one-to-one activation",
            })
        }
    };
    if let Some((lo, hi)) = act.bounded_to {
        if !(x > lo && x < hi) {
            return Err(Error::Domain { what: "post-activation density", value: x });
        }
    }
    let v = spec.variance();
    if v == 0.0 {
        return Err(Error::DegenerateDistribution { variance: v });
    }
    let z = inverse(x);
    let jac = act.derivative(z);
    Ok((-z * z / (2.0 * v)).exp() / ((2.0 * PI * v).sqrt() * jac))
}

/// Post-activation second moment `σ_φ² = ∫𝒟z φ(σz)²`.
pub fn variance_map(spec: GaussianSpec, act: &Activation) -> f64 {
    variance_map_with(spec, act, &Quadrature::default())
}

pub fn variance_map_with(spec: GaussianSpec, act: &Activation, quad: &Quadrature) -> f64 {
    let phi = act.phi;
    quad.expect(spec.std_dev(), |u| {
        let p = phi(u);
        p * p
    })
}

/// Closed-form relative entropy `S(p_uni || p_φ) = ½ ln(8πσ²) + π²/(24σ²) − 2`
/// of the uniform law on (−1, 1) with respect to the tanh post-activation
/// density.
pub fn relative_entropy_uniform(spec: GaussianSpec) -> Result<f64> {
    let v = spec.variance();
    if v == 0.0 {
        return Err(Error::Divergent { variance: v });
    }
    Ok(0.5 * (8.0 * PI * v).ln() + PI * PI / (24.0 * v) - 2.0)
}

/// [`relative_entropy_uniform`] with an explicit activation; only tanh has
/// the closed form, everything else is rejected.
pub fn relative_entropy_uniform_for(spec: GaussianSpec, act: &Activation) -> Result<f64> {
    if act.kind != ActivationKind::Tanh {
        return Err(Error::UnsupportedActivation {
            name: act.name(),
            reason: "relative entropy to the uniform law is only defined for tanh",
        });
    }
    relative_entropy_uniform(spec)
}

/// Relative entropy to the uniform law on the range of a bounded one-to-one
/// activation, by direct numerical integration (substituting `x = φ(z)`).
pub fn relative_entropy_uniform_numeric(spec: GaussianSpec, act: &Activation) -> Result<f64> {
    let (lo, hi) = match (act.injective, act.bounded_to) {
        (true, Some(range)) => range,
        _ => {
            return Err(Error::UnsupportedActivation {
                name: act.name(),
                reason: "needs a bounded one-to-one activation",
            })
        }
    };
    let v = spec.variance();
    if v == 0.0 {
        return Err(Error::Divergent { variance: v });
    }
    let log_uniform = -(hi - lo).ln();
    let log_norm = 0.5 * (2.0 * PI * v).ln();
    // S = ∫ dx p_uni (ln p_uni − ln p_φ(x)),  dx = φ′(z) dz
    let integrand = |z: f64| {
        let d = act.derivative(z);
        if d <= 0.0 {
            return 0.0;
        }
        let log_p = -z * z / (2.0 * v) - log_norm - d.ln();
        d * (log_uniform - log_p)
    };
    let (t, w) = gauss_legendre(20);
    let (z_max, width) = (40.0, 0.5);
    let panels = (2.0 * z_max / width) as usize;
    let mut total = 0.0;
    for k in 0..panels {
        let a = -z_max + k as f64 * width;
        let mid = a + 0.5 * width;
        let half = 0.5 * width;
        total += half * t.iter().zip(&w).map(|(ti, wi)| wi * integrand(mid + half * ti)).sum::<f64>();
    }
    Ok(log_uniform.exp() * total)
}

/// `χ = σ_w² ∫𝒟z φ′(σ_* z)²`.
pub fn chi(sigma_w2: f64, sigma_star2: f64, act: &Activation) -> f64 {
    chi_with(sigma_w2, sigma_star2, act, &Quadrature::default())
}

pub fn chi_with(sigma_w2: f64, sigma_star2: f64, act: &Activation, quad: &Quadrature) -> f64 {
    let dphi = act.dphi;
    sigma_w2
        * quad.expect(sigma_star2.max(0.0).sqrt(), |u| {
            let d = dphi(u);
            d * d
        })
}

/// `χ̃ = −σ_w² ∫𝒟z φ(σ_* z) φ″(σ_* z)`.
pub fn chi_tilde(sigma_w2: f64, sigma_star2: f64, act: &Activation) -> f64 {
    chi_tilde_with(sigma_w2, sigma_star2, act, &Quadrature::default())
}

pub fn chi_tilde_with(sigma_w2: f64, sigma_star2: f64, act: &Activation, quad: &Quadrature) -> f64 {
    let (phi, ddphi) = (act.phi, act.ddphi);
    -sigma_w2 * quad.expect(sigma_star2.max(0.0).sqrt(), |u| phi(u) * ddphi(u))
}

/// Alternative tanh-only form `χ̃ = (2σ_w² / 3σ_*²) ∫dz p(z; σ_*²) z φ(z)³`,
/// obtained from `φ″ = −2φφ′` and an integration by parts. Falls back to the
/// `φφ″` form at `σ_*² = 0`, where the limit is 0.
pub fn chi_tilde_cubic_form(
    sigma_w2: f64,
    sigma_star2: f64,
    act: &Activation,
    quad: &Quadrature,
) -> Result<f64> {
    if act.kind != ActivationKind::Tanh {
        return Err(Error::UnsupportedActivation {
            name: act.name(),
            reason: "the cubic form of chi-tilde relies on the tanh identity φ″ = −2φφ′",
        });
    }
    if sigma_star2 <= 0.0 {
        return Ok(chi_tilde_with(sigma_w2, 0.0, act, quad));
    }
    let phi = act.phi;
    let moment = quad.expect(sigma_star2.sqrt(), |u| {
        let p = phi(u);
        u * p * p * p
    });
    Ok(2.0 * sigma_w2 / (3.0 * sigma_star2) * moment)
}

/// `ξ = −1 / ln χ`, real only in the ordered phase `0 < χ < 1`.
pub fn correlation_length(chi_value: f64) -> Result<f64> {
    if chi_value.is_nan() || chi_value <= 0.0 {
        return Err(Error::Domain { what: "correlation length", value: chi_value });
    }
    if chi_value >= 1.0 {
        return Err(Error::NotALength { chi: chi_value });
    }
    Ok(-1.0 / chi_value.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(v: f64) -> GaussianSpec {
        GaussianSpec::new(v).unwrap()
    }

    #[test]
    fn pre_density_closed_form_and_symmetry() {
        let p0 = pre_density(0.0, spec(1.0)).unwrap();
        assert!((p0 - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert_eq!(pre_density(1.3, spec(2.0)).unwrap(), pre_density(-1.3, spec(2.0)).unwrap());
        assert!(matches!(
            pre_density(0.1, spec(0.0)),
            Err(Error::DegenerateDistribution { .. })
        ));
    }

    #[test]
    fn invalid_variances_are_rejected() {
        assert!(GaussianSpec::new(-0.1).is_err());
        assert!(GaussianSpec::new(f64::NAN).is_err());
        assert!(GaussianSpec::new(f64::INFINITY).is_err());
    }

    #[test]
    fn post_density_at_origin_and_symmetry() {
        let t = Activation::tanh();
        let p = post_density(0.0, spec(1.0), &t).unwrap();
        assert!((p - 0.398_942_280_401_432_7).abs() < 1e-12);
        let v = spec(0.7);
        assert_eq!(post_density(0.5, v, &t).unwrap(), post_density(-0.5, v, &t).unwrap());
    }

    #[test]
    fn post_density_rejects_bad_inputs() {
        let t = Activation::tanh();
        assert!(matches!(post_density(1.0, spec(1.0), &t), Err(Error::Domain { .. })));
        assert!(matches!(post_density(-1.5, spec(1.0), &t), Err(Error::Domain { .. })));
        assert!(matches!(
            post_density(0.2, spec(1.0), &Activation::swish()),
            Err(Error::UnsupportedActivation { .. })
        ));
    }

    #[test]
    fn variance_map_basic_values() {
        let t = Activation::tanh();
        assert_eq!(variance_map(spec(0.0), &t), 0.0);
        let v = variance_map(spec(1.0), &t);
        assert!(v > 0.0 && v < 1.0);
        let min = variance_map(spec(SIGMA2_MIN), &t);
        assert!((min - 0.359).abs() < 0.002, "σ_φ,min² = {min}");
    }

    #[test]
    fn relative_entropy_minimum_is_at_pi_squared_over_12() {
        let s = |v: f64| relative_entropy_uniform(spec(v)).unwrap();
        assert!(s(SIGMA2_MIN) < s(0.2) && s(SIGMA2_MIN) < s(4.0));
        let expected = 0.5 * (2.0 * PI.powi(3) / 3.0).ln() - 1.5;
        assert!((s(SIGMA2_MIN) - expected).abs() < 1e-14);
        assert!((s(SIGMA2_MIN) - 0.0144).abs() < 5e-4);
        assert!(matches!(relative_entropy_uniform(spec(0.0)), Err(Error::Divergent { .. })));
        assert!(relative_entropy_uniform_for(spec(1.0), &Activation::swish()).is_err());
    }

    #[test]
    fn chi_reference_points() {
        let t = Activation::tanh();
        assert!((chi(1.0, 0.0, &t) - 1.0).abs() < 1e-14);
        assert_eq!(chi(0.0, 2.3, &t), 0.0);
        assert!((chi(1.76, 0.57, &t) - 1.0).abs() < 0.02);
        assert!(chi(2.0, 0.5, &t) > chi(2.0, 0.6, &t));
    }

    #[test]
    fn chi_tilde_reference_points() {
        let t = Activation::tanh();
        let q = Quadrature::default();
        assert_eq!(chi_tilde(1.0, 0.0, &t), 0.0);
        let ct = chi_tilde(3.0, 1.5, &t);
        assert!((0.0..=2.0 * 3.0 * 1.5).contains(&ct));
        let a = chi_tilde(2.0, 0.8, &t);
        let b = chi_tilde_cubic_form(2.0, 0.8, &t, &q).unwrap();
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        assert_eq!(chi_tilde_cubic_form(2.0, 0.0, &t, &q).unwrap(), 0.0);
        assert!(chi_tilde_cubic_form(2.0, 0.8, &Activation::swish(), &q).is_err());
    }

    #[test]
    fn correlation_length_cases() {
        assert!((correlation_length((-1.0f64).exp()).unwrap() - 1.0).abs() < 1e-15);
        assert!((correlation_length(0.5).unwrap() - 1.0 / 2f64.ln()).abs() < 1e-15);
        assert!(matches!(correlation_length(1.0), Err(Error::NotALength { .. })));
        assert!(matches!(correlation_length(1.3), Err(Error::NotALength { .. })));
        assert!(matches!(correlation_length(0.0), Err(Error::Domain { .. })));
        assert!(matches!(correlation_length(-0.2), Err(Error::Domain { .. })));
    }
}
