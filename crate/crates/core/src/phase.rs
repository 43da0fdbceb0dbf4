//! Layer-variance recursion, its fixed point, and the two curves in the
//! `(σ_w², σ_b²)` plane built on it: lines of constant asymptotic variance
//! (the line of uniformity among them) and the edge of chaos `χ = 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::{Activation, ActivationKind};
use crate::error::{Error, Result};
use crate::gaussian::{
    chi_tilde_with, chi_with, correlation_length, relative_entropy_uniform_for,
    variance_map_with, GaussianSpec, SIGMA2_MIN,
};
use crate::quadrature::Quadrature;
use crate::roots::{bisect, brent};

/// Negative bias variances this close to zero are numerical noise on a
/// curve that touches the axis and are clipped to zero.
const QUADRANT_SLACK: f64 = 1e-10;

/// A point `(σ_w², σ_b²)` of the initialisation phase plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub sigma_w2: f64,
    pub sigma_b2: f64,
}

impl PhasePoint {
    pub fn new(sigma_w2: f64, sigma_b2: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(sigma_w2) || !ok(sigma_b2) {
            return Err(Error::InvalidPhasePoint { sigma_w2, sigma_b2 });
        }
        Ok(PhasePoint { sigma_w2, sigma_b2 })
    }
}

/// Asymptotic variances at a phase point and the criticality quantities
/// derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSolution {
    pub point: PhasePoint,
    pub sigma_star2: f64,
    pub sigma_phi_star2: f64,
    pub chi: f64,
    /// `−1/ln χ`; absent unless `0 < χ < 1`.
    pub xi: Option<f64>,
    pub chi_tilde: f64,
    /// `−1/ln(χ − χ̃)`; absent unless `0 < χ − χ̃ < 1`.
    pub xi_tilde: Option<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// One step of the layer recursion `σ_ℓ² = σ_w² σ_φ²(σ_{ℓ−1}²) + σ_b²`.
pub fn iterate_variance(prev_sigma2: f64, point: PhasePoint, act: &Activation) -> f64 {
    iterate_variance_with(prev_sigma2, point, act, &Quadrature::default())
}

pub fn iterate_variance_with(
    prev_sigma2: f64,
    point: PhasePoint,
    act: &Activation,
    quad: &Quadrature,
) -> f64 {
    let spec = GaussianSpec::new(prev_sigma2.max(0.0)).expect("non-negative variance");
    point.sigma_w2 * variance_map_with(spec, act, quad) + point.sigma_b2
}

/// The variance of every layer `1..=depth` starting from `sigma1_2` at
/// layer 1.
pub fn variance_trajectory(
    sigma1_2: f64,
    depth: usize,
    point: PhasePoint,
    act: &Activation,
) -> Vec<f64> {
    let quad = Quadrature::default();
    let mut out = Vec::with_capacity(depth);
    let mut s = sigma1_2;
    for layer in 0..depth {
        if layer > 0 {
            s = iterate_variance_with(s, point, act, &quad);
        }
        out.push(s);
    }
    out
}

/// Solver for `σ*² = σ_w² σ_φ²(σ*²) + σ_b²`.
///
/// Runs the plain layer recursion from `seed`, halving the step whenever
/// successive updates change sign. If the recursion has not settled after
/// `switch_after` steps (critical slowing down near the edge of chaos, where
/// the contraction rate `χ − χ̃` tends to one) the fixed point is bracketed
/// and found with Brent's method. Either way the result is polished to
/// machine precision, so it does not depend on the seed.
#[derive(Debug, Clone, Copy)]
pub struct FixedPointSolver {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub switch_after: usize,
    /// Layer-1 variance to start from; `None` uses `σ_b² + σ_w²/4`.
    pub seed: Option<f64>,
    pub quadrature: Quadrature,
}

impl Default for FixedPointSolver {
    fn default() -> Self {
        FixedPointSolver {
            tolerance: 1e-10,
            max_iterations: 10_000,
            switch_after: 200,
            seed: None,
            quadrature: Quadrature::default(),
        }
    }
}

const DIVERGENCE_CAP: f64 = 1e8;

impl FixedPointSolver {
    pub fn with_seed(mut self, seed: f64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn solve(&self, point: PhasePoint, act: &Activation) -> Result<FixedPointSolution> {
        let quad = &self.quadrature;
        let step = |s: f64| iterate_variance_with(s, point, act, quad);
        let residual = |s: f64| step(s) - s;

        let mut s = self.seed.unwrap_or(point.sigma_b2 + 0.25 * point.sigma_w2).max(0.0);
        let mut iterations = 0usize;
        let mut prev_delta = 0.0f64;
        let mut settled = false;
        while iterations < self.max_iterations.min(self.switch_after) {
            let mut next = step(s);
            iterations += 1;
            if !next.is_finite() || next > DIVERGENCE_CAP {
                return Err(Error::NoConvergence { iterations, last: next });
            }
            let delta = next - s;
            if delta * prev_delta < 0.0 {
                next = s + 0.5 * delta;
            }
            prev_delta = delta;
            s = next;
            if delta.abs() < self.tolerance {
                settled = true;
                break;
            }
        }

        // Bracket the root of g(s) = step(s) − s around the current iterate.
        let g_s = residual(s);
        let budget = self.max_iterations.saturating_sub(iterations);
        let root = if g_s == 0.0 {
            s
        } else if g_s > 0.0 {
            let mut hi = (2.0 * s).max(s + 1e-6);
            let mut g_hi = residual(hi);
            while g_hi > 0.0 {
                iterations += 1;
                if hi > DIVERGENCE_CAP || iterations >= self.max_iterations {
                    return Err(Error::NoConvergence { iterations, last: hi });
                }
                hi *= 2.0;
                g_hi = residual(hi);
            }
            let (root, evals) = brent(residual, s, hi, 1e-15 * s.max(1.0), budget.max(1))?;
            iterations += evals;
            root
        } else {
            // g(0) = σ_w² φ(0)² + σ_b² ≥ 0, so a root lies in [0, s).
            let mut lo = 0.5 * s;
            let mut g_lo = residual(lo);
            while g_lo < 0.0 && lo > 1e-300 {
                lo *= 0.5;
                g_lo = residual(lo);
                iterations += 1;
            }
            if g_lo < 0.0 {
                0.0
            } else {
                let (root, evals) = brent(residual, lo, s, 1e-15 * s.max(1e-300), budget.max(1))?;
                iterations += evals;
                root
            }
        };
        if !settled && iterations >= self.max_iterations {
            return Err(Error::NoConvergence { iterations, last: root });
        }
        let sigma_star2 = root.max(0.0);
        Ok(self.finish(point, act, sigma_star2, iterations))
    }

    fn finish(
        &self,
        point: PhasePoint,
        act: &Activation,
        sigma_star2: f64,
        iterations: usize,
    ) -> FixedPointSolution {
        let quad = &self.quadrature;
        let spec = GaussianSpec::new(sigma_star2).expect("non-negative fixed point");
        let sigma_phi_star2 = variance_map_with(spec, act, quad);
        let chi = chi_with(point.sigma_w2, sigma_star2, act, quad);
        let chi_tilde = chi_tilde_with(point.sigma_w2, sigma_star2, act, quad);
        let residual = (sigma_star2 - (point.sigma_w2 * sigma_phi_star2 + point.sigma_b2)).abs();
        FixedPointSolution {
            point,
            sigma_star2,
            sigma_phi_star2,
            chi,
            xi: correlation_length(chi).ok(),
            chi_tilde,
            xi_tilde: correlation_length(chi - chi_tilde).ok(),
            iterations,
            residual,
        }
    }
}

pub fn solve_fixed_point(point: PhasePoint, act: &Activation) -> Result<FixedPointSolution> {
    FixedPointSolver::default().solve(point, act)
}

/// `σ_b² = σ*² − σ_φ²(σ*²) σ_w²`: the line of constant asymptotic variance.
/// May be negative; callers restrict to the physical quadrant.
pub fn iso_variance_line(target_sigma_star2: f64, sigma_w2: f64, act: &Activation) -> f64 {
    let spec = GaussianSpec::new(target_sigma_star2.max(0.0)).expect("non-negative variance");
    target_sigma_star2 - variance_map_with(spec, act, &Quadrature::default()) * sigma_w2
}

/// `σ_φ²` at the uniformity variance `π²/12` for tanh (≈ 0.359).
pub fn sigma_phi_min2() -> f64 {
    let spec = GaussianSpec::new(SIGMA2_MIN).expect("positive");
    variance_map_with(spec, &Activation::tanh(), &Quadrature::default())
}

/// The tanh line of uniformity `σ_b² = π²/12 − σ_φ,min² σ_w²`.
pub fn line_of_uniformity(sigma_w2: f64) -> f64 {
    iso_variance_line(SIGMA2_MIN, sigma_w2, &Activation::tanh())
}

/// A critical point together with the asymptotic variance it was built
/// from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub point: PhasePoint,
    pub sigma_star2: f64,
    pub chi: f64,
}

/// Search interval and tolerance for the `χ(σ_w², σ*²) = 1` bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EocSearch {
    pub sigma_star2_lo: f64,
    pub sigma_star2_hi: f64,
    pub tolerance: f64,
}

impl Default for EocSearch {
    fn default() -> Self {
        EocSearch { sigma_star2_lo: 1e-12, sigma_star2_hi: 50.0, tolerance: 1e-12 }
    }
}

/// Edge-of-chaos point at weight variance `sigma_w2`: solve
/// `χ(σ_w², σ*²) = 1` for `σ*²` by bisection, then read off
/// `σ_b² = σ*² − σ_w² σ_φ²(σ*²)`.
pub fn critical_point(sigma_w2: f64, act: &Activation, search: &EocSearch) -> Result<CriticalPoint> {
    if !sigma_w2.is_finite() || sigma_w2 < 0.0 {
        return Err(Error::InvalidPhasePoint { sigma_w2, sigma_b2: 0.0 });
    }
    let quad = Quadrature::default();
    let slope0 = act.derivative(0.0).powi(2);
    // (σ_w² φ′(0)² = 1, σ_b² = 0) with σ*² = 0 is critical whenever φ(0) = 0.
    if act.eval(0.0) == 0.0 && (sigma_w2 * slope0 - 1.0).abs() < 1e-15 {
        return Ok(CriticalPoint { point: PhasePoint::new(sigma_w2, 0.0)?, sigma_star2: 0.0, chi: 1.0 });
    }
    if act.kind == ActivationKind::Tanh && sigma_w2 < 1.0 {
        return Err(Error::NoCriticalPoint {
            sigma_w2,
            reason: "for tanh χ < 1 at every σ*² > 0 when σ_w² < 1".into(),
        });
    }
    let objective = |s2: f64| chi_with(sigma_w2, s2, act, &quad) - 1.0;
    let sigma_star2 = bisect(objective, search.sigma_star2_lo, search.sigma_star2_hi, search.tolerance)
        .map_err(|_| Error::NoCriticalPoint {
            sigma_w2,
            reason: format!(
                "χ − 1 does not change sign for σ*² in [{}, {}]",
                search.sigma_star2_lo, search.sigma_star2_hi
            ),
        })?;
    let spec = GaussianSpec::new(sigma_star2)?;
    let mut sigma_b2 = sigma_star2 - sigma_w2 * variance_map_with(spec, act, &quad);
    if sigma_b2 < 0.0 {
        if sigma_b2 > -QUADRANT_SLACK {
            sigma_b2 = 0.0;
        } else {
            return Err(Error::OutOfQuadrant { sigma_w2, sigma_b2 });
        }
    }
    Ok(CriticalPoint {
        point: PhasePoint::new(sigma_w2, sigma_b2)?,
        sigma_star2,
        chi: chi_with(sigma_w2, sigma_star2, act, &quad),
    })
}

/// Bias variance on the edge of chaos at `sigma_w2`.
pub fn solve_eoc_point(sigma_w2: f64, act: &Activation) -> Result<f64> {
    critical_point(sigma_w2, act, &EocSearch::default()).map(|c| c.point.sigma_b2)
}

/// Sampled edge of chaos; weight variances without a computable critical
/// point are recorded as gaps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EocCurve {
    pub activation: ActivationKind,
    pub points: Vec<CriticalPoint>,
    pub gaps: Vec<EocGap>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EocGap {
    pub sigma_w2: f64,
    pub reason: String,
}

impl EocCurve {
    pub fn phase_points(&self) -> Vec<PhasePoint> {
        self.points.iter().map(|c| c.point).collect()
    }

    /// Smallest and largest weight variance with a critical point.
    pub fn computable_range(&self) -> Option<(f64, f64)> {
        let first = self.points.first()?;
        let last = self.points.last()?;
        Some((first.point.sigma_w2, last.point.sigma_w2))
    }
}

/// `n_points` equally spaced weight variances over `[w_from, w_to]`.
pub fn linspace(from: f64, to: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn eoc_curve(w_from: f64, w_to: f64, n_points: usize, act: &Activation) -> Result<EocCurve> {
    if n_points < 2 {
        return Err(Error::Config(format!("an EOC curve needs at least 2 points, got {n_points}")));
    }
    let search = EocSearch::default();
    let results: Vec<(f64, Result<CriticalPoint>)> = linspace(w_from, w_to, n_points)
        .into_par_iter()
        .map(|w| (w, critical_point(w, act, &search)))
        .collect();
    let mut curve = EocCurve { activation: act.kind, points: Vec::new(), gaps: Vec::new() };
    for (w, r) in results {
        match r {
            Ok(c) => curve.points.push(c),
            Err(e) => curve.gaps.push(EocGap { sigma_w2: w, reason: e.to_string() }),
        }
    }
    Ok(curve)
}

/// Where the tanh edge of chaos crosses the line of uniformity, found by
/// root-finding on the difference of the two curves over `σ_w² ∈ (1, 10]`.
pub fn lou_eoc_intersection(act: &Activation) -> Result<PhasePoint> {
    if act.kind != ActivationKind::Tanh {
        return Err(Error::UnsupportedActivation {
            name: act.name(),
            reason: "the line of uniformity is only defined for tanh",
        });
    }
    let search = EocSearch::default();
    let gap = |w: f64| match critical_point(w, act, &search) {
        Ok(c) => c.point.sigma_b2 - line_of_uniformity(w),
        Err(_) => f64::NAN,
    };
    let (w, _) = brent(gap, 1.0 + 1e-6, 10.0, 1e-12, 200)?;
    PhasePoint::new(w, line_of_uniformity(w))
}

/// `χ` and log relative entropy sampled on a rectangular grid. Cells where
/// the fixed-point solver fails hold `NaN`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub activation: ActivationKind,
    pub w_axis: Vec<f64>,
    pub b_axis: Vec<f64>,
    /// Row-major, `w_axis.len()` rows by `b_axis.len()` columns.
    pub chi_field: Vec<Vec<f64>>,
    pub entropy_field: Vec<Vec<f64>>,
    pub sigma_star2_field: Vec<Vec<f64>>,
}

impl PhaseGrid {
    pub fn chi_at(&self, i: usize, j: usize) -> Option<f64> {
        let v = self.chi_field[i][j];
        (!v.is_nan()).then_some(v)
    }
}

pub fn phase_grid(
    w_range: (f64, f64),
    b_range: (f64, f64),
    resolution: (usize, usize),
    act: &Activation,
) -> Result<PhaseGrid> {
    let (nw, nb) = resolution;
    if nw == 0 || nb == 0 {
        return Err(Error::Config("phase grid resolution must be positive".into()));
    }
    let w_axis = linspace(w_range.0, w_range.1, nw);
    let b_axis = linspace(b_range.0, b_range.1, nb);
    let cells: Vec<(f64, f64, f64)> = (0..nw * nb)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / nb, k % nb);
            let cell = PhasePoint::new(w_axis[i], b_axis[j])
                .and_then(|p| solve_fixed_point(p, act));
            match cell {
                Ok(sol) => {
                    let entropy = GaussianSpec::new(sol.sigma_star2)
                        .and_then(|s| relative_entropy_uniform_for(s, act))
                        .map(f64::ln)
                        .unwrap_or(f64::NAN);
                    (sol.chi, entropy, sol.sigma_star2)
                }
                Err(_) => (f64::NAN, f64::NAN, f64::NAN),
            }
        })
        .collect();
    let mut chi_field = vec![vec![f64::NAN; nb]; nw];
    let mut entropy_field = chi_field.clone();
    let mut sigma_star2_field = chi_field.clone();
    for (k, (c, e, s)) in cells.into_iter().enumerate() {
        let (i, j) = (k / nb, k % nb);
        chi_field[i][j] = c;
        entropy_field[i][j] = e;
        sigma_star2_field[i][j] = s;
    }
    Ok(PhaseGrid { activation: act.kind, w_axis, b_axis, chi_field, entropy_field, sigma_star2_field })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tanh() -> Activation {
        Activation::tanh()
    }

    #[test]
    fn one_step_from_zero_is_the_bias() {
        let p = PhasePoint::new(3.0, 0.2).unwrap();
        assert_eq!(iterate_variance(0.0, p, &tanh()), 0.2);
    }

    #[test]
    fn trajectories_forget_their_start() {
        let p = PhasePoint::new(1.76, 0.05).unwrap();
        let a = variance_trajectory(0.1, 20, p, &tanh());
        let b = variance_trajectory(3.0, 20, p, &tanh());
        assert!((a[9] - b[9]).abs() < 0.01, "{} vs {}", a[9], b[9]);
        assert!((a[19] - b[19]).abs() < 1e-4, "{} vs {}", a[19], b[19]);
        let thirty = variance_trajectory(0.3, 31, p, &tanh());
        assert!((thirty[30] - 0.57).abs() < 0.01);
    }

    #[test]
    fn fixed_point_at_the_trivial_critical_point() {
        let sol = solve_fixed_point(PhasePoint::new(1.0, 0.0).unwrap(), &tanh()).unwrap();
        assert_eq!(sol.sigma_star2, 0.0);
        assert!((sol.chi - 1.0).abs() < 1e-14);
        assert!(sol.xi.is_none());
        assert_eq!(sol.chi_tilde, 0.0);
    }

    #[test]
    fn fixed_point_reference_values() {
        let sol = solve_fixed_point(PhasePoint::new(1.76, 0.05).unwrap(), &tanh()).unwrap();
        assert!((sol.sigma_star2 - 0.57).abs() < 0.01);
        assert!(sol.residual < 1e-10);
        let sol = solve_fixed_point(PhasePoint::new(2.0, 0.104).unwrap(), &tanh()).unwrap();
        assert!((sol.sigma_star2 - SIGMA2_MIN).abs() < 0.01);
    }

    #[test]
    fn ordered_phase_has_both_lengths() {
        let sol = solve_fixed_point(PhasePoint::new(1.2, 0.3).unwrap(), &tanh()).unwrap();
        assert!(sol.chi < 1.0);
        let (xi, xt) = (sol.xi.unwrap(), sol.xi_tilde.unwrap());
        assert!(xt <= xi);
    }

    #[test]
    fn zero_bias_above_one_finds_the_nontrivial_root() {
        let sol = solve_fixed_point(PhasePoint::new(1.5, 0.0).unwrap(), &tanh()).unwrap();
        assert!(sol.sigma_star2 > 0.1);
        assert!(sol.residual < 1e-10);
    }

    #[test]
    fn invalid_points_are_rejected() {
        assert!(PhasePoint::new(-1.0, 0.0).is_err());
        assert!(PhasePoint::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn lines_of_constant_variance() {
        assert!((line_of_uniformity(0.0) - 0.822).abs() < 1e-3);
        assert!((line_of_uniformity(2.0) - 0.104).abs() < 0.005);
        let intercept = SIGMA2_MIN / sigma_phi_min2();
        assert!(line_of_uniformity(intercept).abs() < 1e-3);
        for w in [0.0, 0.7, 3.3] {
            assert_eq!(line_of_uniformity(w), iso_variance_line(SIGMA2_MIN, w, &tanh()));
        }
    }

    #[test]
    fn eoc_anchor_points() {
        assert!(solve_eoc_point(1.0001, &tanh()).unwrap() < 1e-3);
        assert!((solve_eoc_point(1.76, &tanh()).unwrap() - 0.05).abs() < 0.005);
        assert!((solve_eoc_point(2.0, &tanh()).unwrap() - 0.104).abs() < 0.005);
        assert_eq!(solve_eoc_point(1.0, &tanh()).unwrap(), 0.0);
        assert!(matches!(solve_eoc_point(0.8, &tanh()), Err(Error::NoCriticalPoint { .. })));
    }

    #[test]
    fn swish_outside_its_range_has_no_critical_point() {
        let s = Activation::swish();
        assert!(matches!(solve_eoc_point(1.5, &s), Err(Error::NoCriticalPoint { .. })));
        assert!(matches!(solve_eoc_point(4.5, &s), Err(Error::NoCriticalPoint { .. })));
        assert!(solve_eoc_point(2.5, &s).is_ok());
    }

    #[test]
    fn curve_needs_two_points() {
        assert!(eoc_curve(1.0, 2.0, 1, &tanh()).is_err());
    }

    #[test]
    fn grid_cells_on_both_sides() {
        let g = phase_grid((1.0, 4.0), (0.05, 0.5), (4, 10), &tanh()).unwrap();
        assert_eq!(g.chi_field.len(), 4);
        assert_eq!(g.chi_field[0].len(), 10);
        // (1.0, 0.5) is ordered, (4.0, 0.05) chaotic.
        assert!(g.chi_at(0, 9).unwrap() < 1.0);
        assert!(g.chi_at(3, 0).unwrap() > 1.0);
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(1.0, 10.0, 50);
        assert_eq!(v.len(), 50);
        assert_eq!(v[0], 1.0);
        assert!((v[49] - 10.0).abs() < 1e-12);
    }
}
