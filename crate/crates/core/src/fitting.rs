//! Least-squares fits: the constrained edge-of-chaos polynomial and the
//! hinge model of accuracy against weight variance, plus the analytic
//! saturation thresholds the hinge is compared with.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::gaussian::{variance_map, GaussianSpec, SIGMA2_MIN};
use crate::phase::PhasePoint;
use crate::roots::{brent, golden_section};

/// `σ_b² = Σₙ cₙ (σ_w² − 1)ⁿ / n!` for `n = 2..=degree`. Value and slope
/// vanish at `σ_w² = 1` for any coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EocFit {
    /// `c₂, c₃, …` in order.
    pub coefficients: Vec<f64>,
    pub fit_range: (f64, f64),
    pub rms_residual: f64,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn eoc_basis(sigma_w2: f64, n: usize) -> f64 {
    (sigma_w2 - 1.0).powi(n as i32) / factorial(n)
}

impl EocFit {
    pub fn degree(&self) -> usize {
        self.coefficients.len() + 1
    }

    /// Coefficient `cₙ`, if fitted.
    pub fn coefficient(&self, n: usize) -> Option<f64> {
        n.checked_sub(2).and_then(|i| self.coefficients.get(i)).copied()
    }

    pub fn eval(&self, sigma_w2: f64) -> f64 {
        self.coefficients.iter().enumerate().map(|(i, c)| c * eoc_basis(sigma_w2, i + 2)).sum()
    }

    pub fn slope(&self, sigma_w2: f64) -> f64 {
        let x = sigma_w2 - 1.0;
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, c)| c * x.powi(i as i32 + 1) / factorial(i + 1))
            .sum()
    }
}

/// Polynomial degree used for the edge of chaos when fitting up to
/// `sigma_w2_max`: 9 over `[1, 10]`, fewer terms over shorter ranges.
pub fn default_eoc_degree(sigma_w2_max: f64) -> usize {
    match sigma_w2_max {
        x if x <= 2.0 => 4,
        x if x <= 4.0 => 6,
        x if x <= 7.0 => 8,
        _ => 9,
    }
}

pub fn fit_eoc_polynomial(points: &[PhasePoint], degree: usize) -> Result<EocFit> {
    if degree < 2 {
        return Err(Error::Config(format!("EOC fit degree must be at least 2, got {degree}")));
    }
    let columns = degree - 1;
    let mut distinct: Vec<f64> = points.iter().map(|p| p.sigma_w2).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < columns {
        return Err(Error::RankDeficient { rank: distinct.len(), columns });
    }
    let design = DMatrix::from_fn(points.len(), columns, |r, c| eoc_basis(points[r].sigma_w2, c + 2));
    let target = DVector::from_iterator(points.len(), points.iter().map(|p| p.sigma_b2));
    let svd = design.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let rank = svd.rank(s_max * 1e-13);
    if rank < columns {
        return Err(Error::RankDeficient { rank, columns });
    }
    let coef = svd.solve(&target, s_max * 1e-13).map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let residual = &design * &coef - &target;
    let fit_range = (distinct[0], *distinct.last().expect("non-empty"));
    Ok(EocFit {
        coefficients: coef.iter().copied().collect(),
        fit_range,
        rms_residual: (residual.norm_squared() / points.len() as f64).sqrt(),
    })
}

/// One aggregated accuracy measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub sigma_w2: f64,
    pub accuracy: f64,
    pub accuracy_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThresholdUncertainty {
    pub a_max: f64,
    pub rate: f64,
    pub threshold: f64,
}

/// `A(σ_w²) = a_max − rate · (σ_w² − threshold) · Θ(σ_w² − threshold)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub a_max: f64,
    pub rate: f64,
    pub threshold: f64,
    /// Standard errors from the weighted least-squares covariance.
    pub uncertainties: ThresholdUncertainty,
    /// Standard deviations over parametric bootstrap refits.
    pub bootstrap: Option<ThresholdUncertainty>,
    pub chi2: f64,
    pub points: usize,
}

impl ThresholdFit {
    pub fn eval(&self, sigma_w2: f64) -> f64 {
        self.a_max - self.rate * (sigma_w2 - self.threshold).max(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ThresholdFitOptions {
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
}

impl Default for ThresholdFitOptions {
    fn default() -> Self {
        ThresholdFitOptions { bootstrap_resamples: 200, bootstrap_seed: 0 }
    }
}

/// Weighted fit of `(a, r)` at a fixed knee: `(a, r, χ²)`.
fn hinge_subfit(data: &[AccuracyPoint], t: f64) -> Option<(f64, f64, f64)> {
    let (mut s00, mut s01, mut s11, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in data {
        let w = 1.0 / (p.accuracy_std * p.accuracy_std);
        let x = -(p.sigma_w2 - t).max(0.0);
        s00 += w;
        s01 += w * x;
        s11 += w * x * x;
        t0 += w * p.accuracy;
        t1 += w * x * p.accuracy;
    }
    let det = s00 * s11 - s01 * s01;
    if det.abs() <= 1e-14 * s00 * s11 {
        return None;
    }
    let a = (s11 * t0 - s01 * t1) / det;
    let r = (s00 * t1 - s01 * t0) / det;
    let chi2 = data
        .iter()
        .map(|p| ((p.accuracy - (a - r * (p.sigma_w2 - t).max(0.0))) / p.accuracy_std).powi(2))
        .sum();
    Some((a, r, chi2))
}

/// Weighted straight-line χ²; the hinge must beat it to count as a knee.
fn line_chi2(data: &[AccuracyPoint]) -> f64 {
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in data {
        let w = 1.0 / (p.accuracy_std * p.accuracy_std);
        s0 += w;
        s1 += w * p.sigma_w2;
        s2 += w * p.sigma_w2 * p.sigma_w2;
        t0 += w * p.accuracy;
        t1 += w * p.sigma_w2 * p.accuracy;
    }
    let det = s0 * s2 - s1 * s1;
    let slope = (s0 * t1 - s1 * t0) / det;
    let icept = (t0 - slope * s1) / s0;
    data.iter().map(|p| ((p.accuracy - icept - slope * p.sigma_w2) / p.accuracy_std).powi(2)).sum()
}

fn best_hinge(data: &[AccuracyPoint]) -> Result<(f64, f64, f64, f64)> {
    let xs: Vec<f64> = data.iter().map(|p| p.sigma_w2).collect();
    // Knees leaving at least two points on the flat side and two beyond.
    let candidates: Vec<usize> = (1..xs.len().saturating_sub(2)).collect();
    if candidates.is_empty() {
        return Err(Error::DegenerateFit(format!("{} distinct σ_w² values cannot place a knee", xs.len())));
    }
    let objective = |t: f64| hinge_subfit(data, t).map_or(f64::INFINITY, |(_, _, c)| c);
    let best = *candidates
        .iter()
        .min_by(|&&i, &&j| objective(xs[i]).total_cmp(&objective(xs[j])))
        .expect("non-empty");
    let lo = xs[best - 1].max(xs[candidates[0]]);
    let hi = xs[best + 1].min(xs[*candidates.last().expect("non-empty")]);
    let (mut t, mut chi2) = golden_section(objective, lo, hi, 1e-12 * hi.abs().max(1.0));
    if objective(xs[best]) < chi2 {
        t = xs[best];
        chi2 = objective(t);
    }
    let (a, r, _) = hinge_subfit(data, t).ok_or_else(|| Error::DegenerateFit("singular sub-fit".into()))?;
    Ok((a, r, t, chi2))
}

fn sorted_checked(data: &[AccuracyPoint]) -> Result<Vec<AccuracyPoint>> {
    if data.len() < 5 {
        return Err(Error::DegenerateFit(format!("need at least 5 points, got {}", data.len())));
    }
    if let Some(p) = data.iter().find(|p| !(p.accuracy_std > 0.0 && p.accuracy_std.is_finite())) {
        return Err(Error::DegenerateFit(format!("accuracy_std at σ_w² = {} must be positive", p.sigma_w2)));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.sigma_w2.total_cmp(&b.sigma_w2));
    Ok(sorted)
}

fn covariance(data: &[AccuracyPoint], r: f64, t: f64) -> ThresholdUncertainty {
    let mut jtj = DMatrix::<f64>::zeros(3, 3);
    for p in data {
        let w = 1.0 / (p.accuracy_std * p.accuracy_std);
        let above = p.sigma_w2 > t;
        let j = [1.0, -(p.sigma_w2 - t).max(0.0), if above { r } else { 0.0 }];
        for a in 0..3 {
            for b in 0..3 {
                jtj[(a, b)] += w * j[a] * j[b];
            }
        }
    }
    match jtj.try_inverse() {
        Some(cov) => ThresholdUncertainty {
            a_max: cov[(0, 0)].sqrt(),
            rate: cov[(1, 1)].sqrt(),
            threshold: cov[(2, 2)].sqrt(),
        },
        None => ThresholdUncertainty { a_max: f64::NAN, rate: f64::NAN, threshold: f64::NAN },
    }
}

pub fn fit_threshold(data: &[AccuracyPoint]) -> Result<ThresholdFit> {
    fit_threshold_with(data, &ThresholdFitOptions::default())
}

pub fn fit_threshold_with(data: &[AccuracyPoint], options: &ThresholdFitOptions) -> Result<ThresholdFit> {
    let sorted = sorted_checked(data)?;
    let (a_max, rate, threshold, chi2) = best_hinge(&sorted)?;
    let line = line_chi2(&sorted);
    if rate <= 0.0 || chi2 >= line {
        return Err(Error::DegenerateFit(format!(
            "no knee: best hinge at σ_w² = {threshold:.4} has rate {rate:.3e} and χ² {chi2:.4e} against {line:.4e} for a straight line"
        )));
    }
    let mut fit = ThresholdFit {
        a_max,
        rate,
        threshold,
        uncertainties: covariance(&sorted, rate, threshold),
        bootstrap: None,
        chi2,
        points: sorted.len(),
    };
    if options.bootstrap_resamples > 1 {
        fit.bootstrap = Some(bootstrap(&sorted, &fit, options));
    }
    Ok(fit)
}

/// Refit noisy copies of the fitted curve, one RNG stream per replicate.
fn bootstrap(data: &[AccuracyPoint], fit: &ThresholdFit, options: &ThresholdFitOptions) -> ThresholdUncertainty {
    let refits: Vec<(f64, f64, f64)> = (0..options.bootstrap_resamples)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.bootstrap_seed);
            rng.set_stream(k as u64 + 1);
            let resampled: Vec<AccuracyPoint> = data
                .iter()
                .map(|p| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    AccuracyPoint { accuracy: fit.eval(p.sigma_w2) + p.accuracy_std * noise, ..*p }
                })
                .collect();
            best_hinge(&resampled).ok().map(|(a, r, t, _)| (a, r, t))
        })
        .collect();
    let std = |f: fn(&(f64, f64, f64)) -> f64| {
        let n = refits.len() as f64;
        let mean = refits.iter().map(f).sum::<f64>() / n;
        (refits.iter().map(|x| (f(x) - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    ThresholdUncertainty { a_max: std(|x| x.0), rate: std(|x| x.1), threshold: std(|x| x.2) }
}

/// Pooled input statistics: pixel variance `σ₀²` and squared mean `μ₀²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub input_variance: f64,
    pub input_mean_sq: f64,
}

impl DatasetStats {
    pub fn new(input_variance: f64, input_mean_sq: f64) -> Result<Self> {
        for v in [input_variance, input_mean_sq] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidVariance(v));
            }
        }
        Ok(DatasetStats { input_variance, input_mean_sq })
    }

    /// Second moment `σ₀² + μ₀²` of an input pixel.
    pub fn second_moment(&self) -> f64 {
        self.input_variance + self.input_mean_sq
    }
}

/// Weight variance at which the last hidden layer's pre-activation
/// variance reaches `π²/12`, starting from `σ₁² = σ_w²(σ₀² + μ₀²) + σ_b²`
/// and passing through `depth − 1` further tanh layers.
pub fn analytic_threshold(depth: usize, sigma_b2: f64, stats: &DatasetStats) -> Result<f64> {
    if depth == 0 {
        return Err(Error::Config("depth must be at least 1".into()));
    }
    if !(sigma_b2.is_finite() && sigma_b2 >= 0.0) {
        return Err(Error::InvalidVariance(sigma_b2));
    }
    if sigma_b2 >= SIGMA2_MIN {
        return Err(Error::NoPositiveSolution { sigma_b2, target: SIGMA2_MIN });
    }
    let m = stats.second_moment();
    if m <= 0.0 {
        return Err(Error::NoPositiveSolution { sigma_b2, target: SIGMA2_MIN });
    }
    let first = (SIGMA2_MIN - sigma_b2) / m;
    if depth == 1 {
        return Ok(first);
    }
    let tanh = Activation::tanh();
    let last_variance = |w: f64| {
        let mut s = w * m + sigma_b2;
        for _ in 1..depth {
            s = w * variance_map(GaussianSpec::new(s).expect("non-negative"), &tanh) + sigma_b2;
        }
        s - SIGMA2_MIN
    };
    // Deeper stacks reach the target no later than a single layer, since
    // each tanh layer keeps σ_w² σ_φ² + σ_b² above σ_b² and the map is
    // increasing in σ_w²; widen the bracket anyway if that ever fails.
    let mut hi = first;
    while last_variance(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoPositiveSolution { sigma_b2, target: SIGMA2_MIN });
        }
    }
    brent(last_variance, 0.0, hi, 1e-13, 200).map(|(w, _)| w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hinge_data(a: f64, r: f64, t: f64, noise: &[f64]) -> Vec<AccuracyPoint> {
        (0..16)
            .map(|i| {
                let w = 1.0 + 2.6 * i as f64;
                let acc = a - r * (w - t).max(0.0);
                AccuracyPoint { sigma_w2: w, accuracy: acc + noise.get(i).copied().unwrap_or(0.0), accuracy_std: 0.01 }
            })
            .collect()
    }

    #[test]
    fn eoc_basis_pins_value_and_slope() {
        let fit = EocFit { coefficients: vec![0.3, -1.2, 4.0], fit_range: (1.0, 3.0), rms_residual: 0.0 };
        assert_eq!(fit.eval(1.0), 0.0);
        assert_eq!(fit.slope(1.0), 0.0);
        assert_eq!(fit.degree(), 4);
        assert_eq!(fit.coefficient(3), Some(-1.2));
        let h = 1e-6;
        let fd = (fit.eval(2.0 + h) - fit.eval(2.0 - h)) / (2.0 * h);
        assert!((fd - fit.slope(2.0)).abs() < 1e-8);
    }

    #[test]
    fn polynomial_is_recovered_exactly() {
        let truth = EocFit { coefficients: vec![0.1, 0.7, -0.05], fit_range: (1.0, 4.0), rms_residual: 0.0 };
        let points: Vec<PhasePoint> = (0..20)
            .map(|i| {
                let w = 1.0 + 3.0 * i as f64 / 19.0;
                PhasePoint { sigma_w2: w, sigma_b2: truth.eval(w) }
            })
            .collect();
        let fit = fit_eoc_polynomial(&points, 4).unwrap();
        for (a, b) in fit.coefficients.iter().zip(&truth.coefficients) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn too_few_points_are_rank_deficient() {
        let points = vec![PhasePoint { sigma_w2: 2.0, sigma_b2: 0.1 }; 10];
        assert!(matches!(fit_eoc_polynomial(&points, 4), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn noiseless_hinge_is_recovered() {
        let fit = fit_threshold(&hinge_data(0.9, 0.02, 12.0, &[])).unwrap();
        assert!((fit.a_max - 0.9).abs() < 1e-6);
        assert!((fit.rate - 0.02).abs() < 1e-6);
        assert!((fit.threshold - 12.0).abs() < 1e-6);
    }

    #[test]
    fn scaling_accuracies_keeps_the_knee() {
        let noise = [0.004, -0.01, 0.002, 0.007, -0.003, 0.0, 0.011, -0.006, 0.001, 0.003, -0.008, 0.004, 0.0, -0.002, 0.006, -0.004];
        let data = hinge_data(0.9, 0.02, 15.0, &noise);
        let base = fit_threshold(&data).unwrap();
        let scaled: Vec<_> = data.iter().map(|p| AccuracyPoint { accuracy: 0.5 * p.accuracy, ..*p }).collect();
        let half = fit_threshold(&scaled).unwrap();
        assert!((half.threshold - base.threshold).abs() < 1e-6);
        assert!((half.a_max - 0.5 * base.a_max).abs() < 1e-9);
        assert!((half.rate - 0.5 * base.rate).abs() < 1e-9);
    }

    #[test]
    fn flat_and_straight_data_have_no_knee() {
        let flat: Vec<_> = hinge_data(0.9, 0.0, 0.0, &[]);
        assert!(matches!(fit_threshold(&flat), Err(Error::DegenerateFit(_))));
        let line: Vec<_> = hinge_data(0.9, 0.01, -100.0, &[]);
        assert!(matches!(fit_threshold(&line), Err(Error::DegenerateFit(_))));
        assert!(fit_threshold(&hinge_data(0.9, 0.02, 12.0, &[])[..4]).is_err());
    }

    #[test]
    fn single_layer_threshold_is_affine_in_bias() {
        let stats = DatasetStats::new(0.095, 0.017).unwrap();
        let t0 = analytic_threshold(1, 0.0, &stats).unwrap();
        let t1 = analytic_threshold(1, 0.3, &stats).unwrap();
        assert!((t0 - SIGMA2_MIN / 0.112).abs() < 1e-12);
        assert!(((t1 - t0) / 0.3 + 1.0 / 0.112).abs() < 1e-9);
        assert!(matches!(analytic_threshold(1, 1.0, &stats), Err(Error::NoPositiveSolution { .. })));
    }

    #[test]
    fn deeper_thresholds_come_earlier() {
        let stats = DatasetStats::new(0.095, 0.017).unwrap();
        let one = analytic_threshold(1, 0.1, &stats).unwrap();
        let two = analytic_threshold(2, 0.1, &stats).unwrap();
        let three = analytic_threshold(3, 0.1, &stats).unwrap();
        assert!(two < one && three < two, "{one} {two} {three}");
    }
}
