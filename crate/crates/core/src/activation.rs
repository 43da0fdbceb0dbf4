//! Scalar nonlinearities together with their first two derivatives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Identifies one of the supported activations; this is what configs and
/// CLI flags carry around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    #[default]
    Tanh,
    Swish,
}

impl ActivationKind {
    pub fn activation(self) -> Activation {
        match self {
            ActivationKind::Tanh => Activation::tanh(),
            ActivationKind::Swish => Activation::swish(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Tanh => "tanh",
            ActivationKind::Swish => "swish",
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(ActivationKind::Tanh),
            "swish" | "silu" => Ok(ActivationKind::Swish),
            other => Err(format!("unknown activation `{other}` (expected tanh or swish)")),
        }
    }
}

/// A nonlinearity bundle `(φ, φ′, φ″)` plus the metadata the density
/// transforms need.
#[derive(Clone, Copy)]
pub struct Activation {
    pub kind: ActivationKind,
    pub phi: fn(f64) -> f64,
    pub dphi: fn(f64) -> f64,
    pub ddphi: fn(f64) -> f64,
    /// `φ⁻¹`, present only for one-to-one activations.
    pub inverse: Option<fn(f64) -> f64>,
    /// Open interval containing the range of `φ`, if bounded.
    pub bounded_to: Option<(f64, f64)>,
    pub injective: bool,
}

impl fmt::Debug for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Activation")
            .field("name", &self.name())
            .field("bounded_to", &self.bounded_to)
            .field("injective", &self.injective)
            .finish()
    }
}

impl PartialEq for Activation {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Activation {
    pub fn tanh() -> Self {
        Activation {
            kind: ActivationKind::Tanh,
            phi: f64::tanh,
            dphi: sech2,
            ddphi: tanh_dd,
            inverse: Some(f64::atanh),
            bounded_to: Some((-1.0, 1.0)),
            injective: true,
        }
    }

    /// `swish(z) = z / (1 + e^{-z})`; not one-to-one (it has a minimum near
    /// z ≈ -1.28), so the post-activation density transforms reject it.
    pub fn swish() -> Self {
        Activation {
            kind: ActivationKind::Swish,
            phi: swish,
            dphi: swish_d,
            ddphi: swish_dd,
            inverse: None,
            bounded_to: None,
            injective: false,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        (self.phi)(z)
    }

    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        (self.dphi)(z)
    }

    #[inline]
    pub fn second_derivative(&self, z: f64) -> f64 {
        (self.ddphi)(z)
    }
}

impl From<ActivationKind> for Activation {
    fn from(kind: ActivationKind) -> Self {
        kind.activation()
    }
}

/// `sech²(z)` without the cancellation of `1 - tanh²` in the tails.
fn sech2(z: f64) -> f64 {
    let e = (-2.0 * z.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

fn tanh_dd(z: f64) -> f64 {
    -2.0 * z.tanh() * sech2(z)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn swish(z: f64) -> f64 {
    z * sigmoid(z)
}

fn swish_d(z: f64) -> f64 {
    let s = sigmoid(z);
    s + z * s * (1.0 - s)
}

fn swish_dd(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 - s) * (2.0 + z * (1.0 - 2.0 * s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central(f: fn(f64) -> f64, z: f64) -> f64 {
        let h = 1e-5;
        (f(z + h) - f(z - h)) / (2.0 * h)
    }

    fn check_derivatives(act: Activation) {
        for i in 0..=40 {
            let z = -5.0 + 0.25 * i as f64;
            let d = act.derivative(z);
            let fd = central(act.phi, z);
            assert!(
                (d - fd).abs() <= 1e-6 * d.abs().max(1e-3),
                "{} φ′({z}) = {d}, fd = {fd}",
                act.name()
            );
            let dd = act.second_derivative(z);
            let fdd = central(act.dphi, z);
            assert!(
                (dd - fdd).abs() <= 1e-6 * dd.abs().max(1e-3),
                "{} φ″({z}) = {dd}, fd = {fdd}",
                act.name()
            );
        }
    }

    #[test]
    fn tanh_derivatives_match_finite_differences() {
        check_derivatives(Activation::tanh());
    }

    #[test]
    fn swish_derivatives_match_finite_differences() {
        check_derivatives(Activation::swish());
    }

    #[test]
    fn tanh_second_derivative_identity() {
        let t = Activation::tanh();
        for i in 0..=100 {
            let z = -6.0 + 0.12 * i as f64;
            let lhs = t.second_derivative(z);
            let rhs = -2.0 * t.eval(z) * t.derivative(z);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn sech2_is_stable_in_the_tails() {
        assert_eq!(sech2(0.0), 1.0);
        assert!(sech2(400.0) >= 0.0);
        assert!((sech2(30.0) - 4.0 * (-60.0f64).exp()).abs() < 1e-38);
    }

    #[test]
    fn kind_round_trips_through_strings() {
        for kind in [ActivationKind::Tanh, ActivationKind::Swish] {
            assert_eq!(kind.to_string().parse::<ActivationKind>().unwrap(), kind);
        }
        assert!("relu".parse::<ActivationKind>().is_err());
    }
}
