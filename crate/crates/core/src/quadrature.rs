//! Quadrature for expectations under the standard Gaussian measure
//! `𝒟z = dz e^{-z²/2} / √(2π)`.
//!
//! Two schemes are provided. Plain Gauss–Hermite is exact for polynomials
//! and fine while the integrand varies on the unit scale. Expectations of
//! the form `E[f(σZ)]` with large `σ` concentrate the structure of `f`
//! (the `sech²` bump, the swish knee) into a window of width `1/σ` around
//! the origin, which a fixed Hermite grid undersamples. The scaled composite
//! rule places Gauss–Legendre panels of width `min(1, 1/σ)` over that window
//! and unit panels over the rest of the Gaussian body.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integration cutoff in units of the standard deviation; the neglected
/// Gaussian tail mass is below 1e-32.
const Z_MAX: f64 = 12.0;
/// Number of narrow panels per side covering `|σz| ≤ 10`.
const INNER_PANELS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    GaussHermite,
    ScaledComposite,
}

/// A fixed set of nodes and weights for `∫𝒟z f(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub scheme: Scheme,
    /// Total node count for Gauss–Hermite, nodes per panel for the
    /// composite rule.
    pub order: usize,
}

impl QuadratureRule {
    /// Gauss–Hermite rule normalised to the standard Gaussian measure.
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("quadrature order must be positive".into()));
        }
        let (x, w) = hermite_physicists(order);
        let nodes = x.iter().map(|t| t * std::f64::consts::SQRT_2).collect();
        let weights = w.iter().map(|v| v / PI.sqrt()).collect();
        Ok(QuadratureRule { nodes, weights, scheme: Scheme::GaussHermite, order })
    }

    /// Composite Gauss–Legendre rule adapted to integrands `f(σz)`; the
    /// Gaussian density is folded into the weights.
    pub fn scaled_composite(order: usize, sigma: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("quadrature order must be positive".into()));
        }
        let reference = legendre_cached(order);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for (a, b) in panels(sigma) {
            for side in [-1.0, 1.0] {
                let (lo, hi) = if side > 0.0 { (a, b) } else { (-b, -a) };
                let half = 0.5 * (hi - lo);
                let mid = 0.5 * (hi + lo);
                for (t, w) in reference.0.iter().zip(&reference.1) {
                    let z = mid + half * t;
                    nodes.push(z);
                    weights.push(half * w * gaussian_density(z));
                }
            }
        }
        Ok(QuadratureRule { nodes, weights, scheme: Scheme::ScaledComposite, order })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫𝒟z f(z)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }
}

/// Quadrature settings: which scheme, at which order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum Quadrature {
    GaussHermite { order: usize },
    ScaledComposite { order: usize },
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::ScaledComposite { order: 10 }
    }
}

impl Quadrature {
    pub fn order(&self) -> usize {
        match *self {
            Quadrature::GaussHermite { order } | Quadrature::ScaledComposite { order } => order,
        }
    }

    /// Same scheme at twice the order.
    pub fn doubled(&self) -> Self {
        match *self {
            Quadrature::GaussHermite { order } => Quadrature::GaussHermite { order: 2 * order },
            Quadrature::ScaledComposite { order } => {
                Quadrature::ScaledComposite { order: 2 * order }
            }
        }
    }

    /// The explicit rule used for integrands `f(σz)`.
    pub fn rule(&self, sigma: f64) -> Result<QuadratureRule> {
        match *self {
            Quadrature::GaussHermite { order } => QuadratureRule::gauss_hermite(order),
            Quadrature::ScaledComposite { order } => QuadratureRule::scaled_composite(order, sigma),
        }
    }

    /// `E[f(σZ)]` for `Z ~ N(0, 1)`.
    pub fn expect(&self, sigma: f64, f: impl Fn(f64) -> f64) -> f64 {
        if sigma == 0.0 {
            return f(0.0);
        }
        match *self {
            Quadrature::GaussHermite { order } => {
                let rule = hermite_cached(order);
                rule.integrate(|z| f(sigma * z))
            }
            Quadrature::ScaledComposite { order } => {
                let reference = legendre_cached(order);
                let mut total = 0.0;
                for (a, b) in panels(sigma) {
                    let half = 0.5 * (b - a);
                    let mid = 0.5 * (b + a);
                    let mut panel = 0.0;
                    for (t, w) in reference.0.iter().zip(&reference.1) {
                        let z = mid + half * t;
                        let g = gaussian_density(z);
                        panel += w * g * (f(sigma * z) + f(-sigma * z));
                    }
                    total += half * panel;
                }
                total
            }
        }
    }
}

#[inline]
fn gaussian_density(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Positive-side panel boundaries for an integrand `f(σz)`.
fn panels(sigma: f64) -> impl Iterator<Item = (f64, f64)> {
    let s = if sigma > 1.0 { 1.0 / sigma } else { 1.0 };
    let inner = (0..INNER_PANELS).map(move |k| (k as f64 * s, (k + 1) as f64 * s));
    let start = INNER_PANELS as f64 * s;
    let outer_count = ((Z_MAX - start).max(0.0)).ceil() as usize;
    let outer = (0..outer_count).map(move |k| {
        let a = start + k as f64;
        (a, (a + 1.0).min(Z_MAX))
    });
    inner.chain(outer)
}

type NodesWeights = Arc<(Vec<f64>, Vec<f64>)>;

fn legendre_cached(order: usize) -> NodesWeights {
    static CACHE: OnceLock<RwLock<HashMap<usize, NodesWeights>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.read().expect("quadrature cache poisoned").get(&order) {
        return hit.clone();
    }
    let rule = Arc::new(gauss_legendre(order));
    cache.write().expect("quadrature cache poisoned").insert(order, rule.clone());
    rule
}

fn hermite_cached(order: usize) -> Arc<QuadratureRule> {
    static CACHE: OnceLock<RwLock<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(hit) = cache.read().expect("quadrature cache poisoned").get(&order) {
        return hit.clone();
    }
    let rule = Arc::new(QuadratureRule::gauss_hermite(order.max(1)).expect("positive order"));
    cache.write().expect("quadrature cache poisoned").insert(order, rule.clone());
    rule
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// three-term recurrence.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * pp * pp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Hermite nodes and weights for the weight `e^{-x²}` (weights sum
/// to √π), using the orthonormal recurrence for stability at high order.
fn hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(rule: &QuadratureRule) -> (f64, f64, f64) {
        (
            rule.integrate(|_| 1.0),
            rule.integrate(|z| z * z),
            rule.integrate(|z| z.powi(4)),
        )
    }

    #[test]
    fn gauss_hermite_is_normalised() {
        for order in [1, 2, 5, 20, 80, 160] {
            let rule = QuadratureRule::gauss_hermite(order).unwrap();
            let (m0, m2, m4) = moments(&rule);
            assert!((m0 - 1.0).abs() < 1e-12, "order {order}: ∫1 = {m0}");
            if order >= 2 {
                assert!((m2 - 1.0).abs() < 1e-10, "order {order}: ∫z² = {m2}");
            }
            if order >= 3 {
                assert!((m4 - 3.0).abs() < 1e-9, "order {order}: ∫z⁴ = {m4}");
            }
        }
    }

    #[test]
    fn composite_is_normalised_at_every_scale() {
        for sigma in [0.0, 0.3, 1.0, 4.0, 50.0] {
            let rule = QuadratureRule::scaled_composite(10, sigma).unwrap();
            let (m0, m2, m4) = moments(&rule);
            assert!((m0 - 1.0).abs() < 1e-12, "σ {sigma}: ∫1 = {m0}");
            assert!((m2 - 1.0).abs() < 1e-10, "σ {sigma}: ∫z² = {m2}");
            assert!((m4 - 3.0).abs() < 1e-10, "σ {sigma}: ∫z⁴ = {m4}");
        }
    }

    #[test]
    fn expect_matches_explicit_rule() {
        let q = Quadrature::default();
        let sigma = 2.7;
        let f = |u: f64| u.tanh().powi(2) + 0.1 * u;
        let direct = q.expect(sigma, f);
        let rule = q.rule(sigma).unwrap();
        let explicit = rule.integrate(|z| f(sigma * z));
        assert!((direct - explicit).abs() < 1e-14);
    }

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(t, v)| v * t.powi(12)).sum();
        assert!((s - 2.0 / 13.0).abs() < 1e-14);
    }

    #[test]
    fn zero_order_is_rejected() {
        assert!(QuadratureRule::gauss_hermite(0).is_err());
        assert!(QuadratureRule::scaled_composite(0, 1.0).is_err());
    }
}
