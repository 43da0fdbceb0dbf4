//! Desk-scale versions of the four experiment families: post-activation
//! evolution through a deep random network, accuracy along the edge of
//! chaos, accuracy over depth and weight variance, and saturation
//! thresholds of small networks.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::fitting::{fit_threshold_with, AccuracyPoint, ThresholdFit, ThresholdFitOptions};
use crate::network::{init_network, train, EpochMetrics, LabeledData, Network, NetworkConfig, TrainConfig};
use crate::output::Provenance;
use crate::phase::{solve_eoc_point, variance_trajectory, PhasePoint};

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one run, a function of the sweep's master seed, the grid point
/// and the replicate only.
pub fn run_seed(master: u64, point_index: usize, seed: u64) -> u64 {
    mix(mix(mix(master) ^ point_index as u64) ^ seed)
}

/// Two-sample Kolmogorov–Smirnov statistic of sorted samples.
pub fn ks_distance_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    ks_distance_sorted(&sorted(a), &sorted(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostEvolutionConfig {
    pub point: PhasePoint,
    /// Layer-1 pre-activation variances to start from.
    pub sigma1_list: Vec<f64>,
    pub depth: usize,
    pub width: usize,
    /// Inputs pushed through the network; each contributes `width` values
    /// per layer.
    pub n_samples: usize,
    pub bins: usize,
    pub seed: u64,
    #[serde(default)]
    pub activation: ActivationKind,
}

impl Default for PostEvolutionConfig {
    fn default() -> Self {
        PostEvolutionConfig {
            point: PhasePoint { sigma_w2: 1.76, sigma_b2: 0.05 },
            sigma1_list: vec![0.1, 0.57, 3.0],
            depth: 30,
            width: 256,
            n_samples: 200,
            bins: 50,
            seed: 0,
            activation: ActivationKind::Tanh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerHistogram {
    /// 1-based layer index.
    pub layer: usize,
    pub lower: f64,
    pub upper: f64,
    pub counts: Vec<u64>,
    pub mean: f64,
    pub variance: f64,
    /// Fraction of post-activations with `|x| > 0.9`.
    pub edge_mass: f64,
    /// Second moment of the layer's pre-activations.
    pub preactivation_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostEvolutionRun {
    pub sigma1_2: f64,
    pub layers: Vec<LayerHistogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerKs {
    pub layer: usize,
    /// `(i, j, D)` for each pair of runs `i < j`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostEvolutionResult {
    pub config: PostEvolutionConfig,
    pub provenance: Provenance,
    pub runs: Vec<PostEvolutionRun>,
    pub ks: Vec<LayerKs>,
    /// Mean-field variance predicted at each layer for each run.
    pub predicted_variances: Vec<Vec<f64>>,
}

impl PostEvolutionResult {
    pub fn ks_at(&self, layer: usize) -> Option<&LayerKs> {
        self.ks.iter().find(|k| k.layer == layer)
    }
}

/// Push Gaussian layer-1 pre-activations of each requested variance through
/// one fixed random network and histogram every layer's post-activations.
pub fn run_post_evolution(config: &PostEvolutionConfig) -> Result<PostEvolutionResult> {
    if config.depth == 0 || config.width == 0 || config.n_samples == 0 || config.bins == 0 {
        return Err(Error::Config("depth, width, n_samples and bins must be positive".into()));
    }
    if config.sigma1_list.is_empty() {
        return Err(Error::Config("sigma1_list must not be empty".into()));
    }
    let act = config.activation.activation();
    let net_config = NetworkConfig {
        depth: config.depth,
        width: config.width,
        input_dim: config.width,
        output_dim: 1,
        activation: config.activation,
        init: config.point,
        seed: run_seed(config.seed, 0, 0),
    };
    let net = init_network(net_config)?;

    let mut sorted_by_run: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut runs = Vec::new();
    for (k, &s1) in config.sigma1_list.iter().enumerate() {
        if !(s1.is_finite() && s1 >= 0.0) {
            return Err(Error::InvalidVariance(s1));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed(config.seed, k + 1, 0));
        let scale = s1.sqrt();
        let mut z = Array2::from_shape_simple_fn((config.n_samples, config.width), || {
            scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)
        });
        let mut layers = Vec::with_capacity(config.depth);
        let mut samples = Vec::with_capacity(config.depth);
        for l in 0..config.depth {
            if l > 0 {
                let layer = &net.layers[l];
                z = z.mapv(act.phi).dot(&layer.weights) + &layer.biases;
            }
            let pre_var = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
            let mut x: Vec<f64> = z.iter().map(|&v| act.eval(v)).collect();
            x.sort_by(f64::total_cmp);
            layers.push(histogram(l + 1, &x, config.bins, act.bounded_to, pre_var));
            samples.push(x);
        }
        runs.push(PostEvolutionRun { sigma1_2: s1, layers });
        sorted_by_run.push(samples);
    }

    let ks = (0..config.depth)
        .map(|l| {
            let mut pairs = Vec::new();
            for i in 0..sorted_by_run.len() {
                for j in i + 1..sorted_by_run.len() {
                    pairs.push((i, j, ks_distance_sorted(&sorted_by_run[i][l], &sorted_by_run[j][l])));
                }
            }
            let max = pairs.iter().map(|p| p.2).fold(0.0, f64::max);
            LayerKs { layer: l + 1, pairs, max }
        })
        .collect();
    let predicted_variances =
        config.sigma1_list.iter().map(|&s1| variance_trajectory(s1, config.depth, config.point, &act)).collect();
    Ok(PostEvolutionResult { config: config.clone(), provenance: Provenance::of(config)?, runs, ks, predicted_variances })
}

fn histogram(layer: usize, sorted: &[f64], bins: usize, bounds: Option<(f64, f64)>, pre_var: f64) -> LayerHistogram {
    let n = sorted.len() as f64;
    let (lower, upper) = bounds.unwrap_or((sorted[0], sorted[sorted.len() - 1].max(sorted[0] + 1e-12)));
    let width = (upper - lower) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in sorted {
        let b = (((x - lower) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let mean = sorted.iter().sum::<f64>() / n;
    let variance = sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let edge_mass = sorted.iter().filter(|x| x.abs() > 0.9).count() as f64 / n;
    LayerHistogram { layer, lower, upper, counts, mean, variance, edge_mass, preactivation_variance: pre_var }
}

/// Empirical versus mean-field pre-activation variance of each layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceBridge {
    pub point: PhasePoint,
    pub predicted: Vec<f64>,
    pub empirical_mean: Vec<f64>,
    /// Standard error of the mean over independent networks.
    pub standard_error: Vec<f64>,
}

impl VarianceBridge {
    /// Largest `|empirical − predicted| / SE` over layers.
    pub fn max_z_score(&self) -> f64 {
        self.predicted
            .iter()
            .zip(&self.empirical_mean)
            .zip(&self.standard_error)
            .map(|((p, e), se)| (e - p).abs() / se)
            .fold(0.0, f64::max)
    }
}

/// Feed standard-normal inputs of dimension `width` through `n_networks`
/// independent networks, so that `σ₁² = σ_w² + σ_b²`, and compare the
/// per-layer pre-activation second moment to the layer recursion.
pub fn variance_bridge(
    point: PhasePoint,
    depth: usize,
    width: usize,
    n_networks: usize,
    n_inputs: usize,
    seed: u64,
) -> Result<VarianceBridge> {
    if n_networks < 2 {
        return Err(Error::Config("the variance bridge needs at least two networks".into()));
    }
    let per_net: Vec<Vec<f64>> = (0..n_networks)
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>> {
            let config = NetworkConfig {
                depth,
                width,
                input_dim: width,
                output_dim: 1,
                activation: ActivationKind::Tanh,
                init: point,
                seed: run_seed(seed, k, 0),
            };
            let net = init_network(config)?;
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed(seed, k, 1));
            let x = Array2::from_shape_simple_fn((n_inputs, width), || StandardNormal.sample(&mut rng));
            let cache = net.forward(x.view())?;
            Ok(cache.pre.iter().map(|z| z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64).collect())
        })
        .collect::<Result<_>>()?;
    let m = n_networks as f64;
    let mut empirical_mean = vec![0.0; depth];
    let mut standard_error = vec![0.0; depth];
    for l in 0..depth {
        let mean = per_net.iter().map(|v| v[l]).sum::<f64>() / m;
        let var = per_net.iter().map(|v| (v[l] - mean).powi(2)).sum::<f64>() / (m - 1.0);
        empirical_mean[l] = mean;
        standard_error[l] = (var / m).sqrt();
    }
    let act = ActivationKind::Tanh.activation();
    let predicted = variance_trajectory(point.sigma_w2 + point.sigma_b2, depth, point, &act);
    Ok(VarianceBridge { point, predicted, empirical_mean, standard_error })
}

/// A grid of training runs: every combination of depth, phase point,
/// learning rate and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub activation: ActivationKind,
    pub depths: Vec<usize>,
    pub width: usize,
    pub points: Vec<PhasePoint>,
    pub learning_rates: Vec<f64>,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
    pub train_subset: usize,
    pub test_subset: usize,
}

impl SweepSpec {
    /// Desk-scale defaults around the given points.
    pub fn desk(depth: usize, points: Vec<PhasePoint>) -> Self {
        SweepSpec {
            activation: ActivationKind::Tanh,
            depths: vec![depth],
            width: 64,
            points,
            learning_rates: vec![1e-3],
            train: TrainConfig::default(),
            seeds: (0..5).collect(),
            master_seed: 0,
            train_subset: 10_000,
            test_subset: 2_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty() || self.points.is_empty() || self.learning_rates.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("sweep axes and seeds must be non-empty".into()));
        }
        if self.width == 0 || self.depths.contains(&0) {
            return Err(Error::Config("sweep depth and width must be positive".into()));
        }
        self.train.validate()
    }

    /// Grid cells in output order: depth, then point, then learning rate.
    pub fn cells(&self) -> Vec<(usize, PhasePoint, f64)> {
        let mut out = Vec::new();
        for &d in &self.depths {
            for &p in &self.points {
                for &lr in &self.learning_rates {
                    out.push((d, p, lr));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub cell: usize,
    pub depth: usize,
    pub point: PhasePoint,
    pub learning_rate: f64,
    pub seed: u64,
    pub run_seed: u64,
    pub diverged: bool,
    pub initial_test_accuracy: f64,
    /// Last test accuracy reached; for a diverged run, before divergence.
    pub final_test_accuracy: f64,
    pub epochs: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub depth: usize,
    pub point: PhasePoint,
    pub learning_rate: f64,
    pub runs: usize,
    pub converged: usize,
    /// Over converged runs only.
    pub mean_accuracy: f64,
    /// Sample standard deviation over seeds.
    pub std_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub provenance: Provenance,
    pub runs: Vec<RunSummary>,
    pub aggregates: Vec<CellAggregate>,
}

impl SweepResult {
    pub fn cell(&self, depth: usize, sigma_w2: f64) -> Option<&CellAggregate> {
        self.aggregates.iter().find(|a| a.depth == depth && (a.point.sigma_w2 - sigma_w2).abs() < 1e-9)
    }
}

/// `sqrt(mean of per-cell variances)`.
pub fn pooled_std(cells: &[&CellAggregate]) -> f64 {
    let n = cells.len() as f64;
    (cells.iter().map(|c| c.std_accuracy * c.std_accuracy).sum::<f64>() / n).sqrt()
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    (mean, (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// Train and test data for a sweep.
#[derive(Debug, Clone)]
pub struct SweepData {
    pub train: LabeledData,
    pub test: LabeledData,
}

pub fn aggregate(spec: &SweepSpec, runs: &[RunSummary]) -> Vec<CellAggregate> {
    spec.cells()
        .into_iter()
        .enumerate()
        .map(|(idx, (depth, point, learning_rate))| {
            let mine: Vec<&RunSummary> = runs.iter().filter(|r| r.cell == idx).collect();
            let acc: Vec<f64> = mine.iter().filter(|r| !r.diverged).map(|r| r.final_test_accuracy).collect();
            let (mean_accuracy, std_accuracy) = mean_std(&acc);
            CellAggregate { depth, point, learning_rate, runs: mine.len(), converged: acc.len(), mean_accuracy, std_accuracy }
        })
        .collect()
}

/// Train one network per (cell, seed). Runs are independent and each
/// draws its own seed, so the result does not depend on scheduling.
pub fn run_sweep(spec: &SweepSpec, data: &SweepData) -> Result<SweepResult> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|c| (0..spec.seeds.len()).map(move |s| (c, s))).collect();
    let input_dim = data.train.features.ncols();
    let runs = jobs
        .into_par_iter()
        .map(|(cell, k)| -> Result<RunSummary> {
            let (depth, point, learning_rate) = cells[cell];
            let seed = spec.seeds[k];
            let rs = run_seed(spec.master_seed, cell, seed);
            let config = NetworkConfig {
                depth,
                width: spec.width,
                input_dim,
                output_dim: 10,
                activation: spec.activation,
                init: point,
                seed: rs,
            };
            let mut net: Network = init_network(config)?;
            let tcfg = TrainConfig { learning_rate, rng_seed: mix(rs), ..spec.train };
            let (record, diverged) = match train(&mut net, &data.train, &data.test, &tcfg) {
                Ok(r) => (r, false),
                Err(Error::TrainingDiverged { partial, .. }) => (*partial, true),
                Err(e) => return Err(e),
            };
            Ok(RunSummary {
                cell,
                depth,
                point,
                learning_rate,
                seed,
                run_seed: rs,
                diverged,
                initial_test_accuracy: record.initial_test_accuracy,
                final_test_accuracy: record.final_test_accuracy(),
                epochs: record.epochs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregates = aggregate(spec, &runs);
    Ok(SweepResult { spec: spec.clone(), provenance: Provenance::of(spec)?, runs, aggregates })
}

/// Points on the edge of chaos at the given weight variances.
pub fn eoc_points(sigma_w2: &[f64], activation: ActivationKind) -> Result<Vec<PhasePoint>> {
    let act = activation.activation();
    sigma_w2.iter().map(|&w| PhasePoint::new(w, solve_eoc_point(w, &act)?)).collect()
}

/// Accuracy along the edge of chaos. `spec.points` must lie on it; build
/// them with [`eoc_points`].
pub fn run_eoc_sweep(spec: &SweepSpec, data: &SweepData) -> Result<SweepResult> {
    let act = spec.activation.activation();
    for p in &spec.points {
        let b = solve_eoc_point(p.sigma_w2, &act)?;
        if (b - p.sigma_b2).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "({}, {}) is not on the {} edge of chaos (σ_b² there is {b})",
                p.sigma_w2, p.sigma_b2, spec.activation
            )));
        }
    }
    run_sweep(spec, data)
}

/// Accuracy over a (depth, σ_w²) grid at one bias variance.
pub fn run_depth_sweep(spec: &SweepSpec, data: &SweepData) -> Result<SweepResult> {
    let b = spec.points.first().map(|p| p.sigma_b2);
    if spec.points.iter().any(|p| Some(p.sigma_b2) != b) {
        return Err(Error::Config("a depth sweep holds σ_b² fixed across its points".into()));
    }
    run_sweep(spec, data)
}

/// `n` weight variances from `lo` to `hi`, spaced evenly in `ln σ_w²`.
pub fn geometric_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSweepSpec {
    pub depth: usize,
    pub width: usize,
    pub sigma_b2_list: Vec<f64>,
    pub sigma_w2_axis: Vec<f64>,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
    pub train_subset: usize,
    pub test_subset: usize,
    pub bootstrap_resamples: usize,
}

impl Default for ThresholdSweepSpec {
    fn default() -> Self {
        ThresholdSweepSpec {
            depth: 1,
            width: 8,
            sigma_b2_list: vec![0.0, 0.5, 1.0, 1.5],
            sigma_w2_axis: geometric_axis(1.0, 40.0, 16),
            train: TrainConfig::default(),
            seeds: (0..5).collect(),
            master_seed: 0,
            train_subset: 10_000,
            test_subset: 2_000,
            bootstrap_resamples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweepEntry {
    pub sigma_b2: f64,
    pub data: Vec<AccuracyPoint>,
    pub fit: Option<ThresholdFit>,
    /// Why the fit failed, when it did.
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweepResult {
    pub spec: ThresholdSweepSpec,
    pub provenance: Provenance,
    pub sweep: SweepResult,
    pub entries: Vec<ThresholdSweepEntry>,
}

/// Floor on the per-point spread used as a fit weight, so that a point
/// where every seed agrees does not dominate the fit.
pub const MIN_ACCURACY_STD: f64 = 1e-3;

pub fn run_threshold_sweep(spec: &ThresholdSweepSpec, data: &SweepData) -> Result<ThresholdSweepResult> {
    if !(spec.depth == 1 || spec.depth == 2) {
        return Err(Error::Config(format!("threshold sweeps use depth 1 or 2, got {}", spec.depth)));
    }
    let points = spec
        .sigma_b2_list
        .iter()
        .flat_map(|&b| spec.sigma_w2_axis.iter().map(move |&w| PhasePoint::new(w, b)))
        .collect::<Result<Vec<_>>>()?;
    let sweep_spec = SweepSpec {
        activation: ActivationKind::Tanh,
        depths: vec![spec.depth],
        width: spec.width,
        points,
        learning_rates: vec![spec.train.learning_rate],
        train: spec.train,
        seeds: spec.seeds.clone(),
        master_seed: spec.master_seed,
        train_subset: spec.train_subset,
        test_subset: spec.test_subset,
    };
    let sweep = run_sweep(&sweep_spec, data)?;
    let options = ThresholdFitOptions { bootstrap_resamples: spec.bootstrap_resamples, bootstrap_seed: spec.master_seed };
    let entries = spec
        .sigma_b2_list
        .iter()
        .map(|&b| {
            let points: Vec<AccuracyPoint> = sweep
                .aggregates
                .iter()
                .filter(|a| a.point.sigma_b2 == b)
                .map(|a| AccuracyPoint {
                    sigma_w2: a.point.sigma_w2,
                    accuracy: a.mean_accuracy,
                    accuracy_std: a.std_accuracy.max(MIN_ACCURACY_STD),
                })
                .collect();
            let (fit, fit_error) = match fit_threshold_with(&points, &options) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            ThresholdSweepEntry { sigma_b2: b, data: points, fit, fit_error }
        })
        .collect();
    Ok(ThresholdSweepResult { spec: spec.clone(), provenance: Provenance::of(spec)?, sweep, entries })
}

/// Mean-field variance of each hidden layer predicted for a network fed
/// inputs with the given pixel second moment.
pub fn predicted_layer_variances(point: PhasePoint, depth: usize, input_second_moment: f64) -> Vec<f64> {
    let act = ActivationKind::Tanh.activation();
    variance_trajectory(point.sigma_w2 * input_second_moment + point.sigma_b2, depth, point, &act)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_identical_and_disjoint_samples() {
        let a = [0.1, 0.2, 0.3];
        assert_eq!(ks_distance(&a, &a), 0.0);
        assert_eq!(ks_distance(&a, &[1.0, 2.0]), 1.0);
        assert!((ks_distance(&[1.0, 2.0, 3.0, 4.0], &[3.0, 4.0, 5.0, 6.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn run_seeds_separate_points_and_replicates() {
        let s = run_seed(7, 0, 0);
        assert_ne!(s, run_seed(7, 1, 0));
        assert_ne!(s, run_seed(7, 0, 1));
        assert_ne!(s, run_seed(8, 0, 0));
        assert_eq!(s, run_seed(7, 0, 0));
    }

    #[test]
    fn geometric_axis_endpoints() {
        let a = geometric_axis(1.0, 40.0, 16);
        assert_eq!(a.len(), 16);
        assert_eq!(a[0], 1.0);
        assert!((a[15] - 40.0).abs() < 1e-12);
        assert!(a.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn post_evolution_reaches_a_common_distribution() {
        let config = PostEvolutionConfig { width: 128, n_samples: 64, depth: 12, ..Default::default() };
        let r = run_post_evolution(&config).unwrap();
        assert!(r.ks_at(1).unwrap().max > 0.2);
        assert!(r.ks_at(10).unwrap().max < 0.05, "{:?}", r.ks_at(10));
        let narrow = &r.runs[0];
        assert!(narrow.layers[0].variance < narrow.layers[9].variance);
        let wide = &r.runs[2];
        assert!(wide.layers[0].edge_mass > wide.layers[9].edge_mass);
    }

    #[test]
    fn bridge_on_a_small_network() {
        let p = PhasePoint::new(1.76, 0.05).unwrap();
        let b = variance_bridge(p, 5, 128, 40, 16, 3).unwrap();
        assert!(b.max_z_score() < 4.0, "{b:?}");
    }

    fn toy_data() -> SweepData {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut make = |n: usize| {
            let x = Array2::from_shape_simple_fn((n, 6), || StandardNormal.sample(&mut rng));
            let y = x.rows().into_iter().map(|r| if r[0] > 0.0 { 1 } else { 0 }).collect();
            LabeledData::new(x, y).unwrap()
        };
        SweepData { train: make(200), test: make(100) }
    }

    #[test]
    fn sweep_aggregates_match_runs() {
        let mut spec = SweepSpec::desk(2, vec![PhasePoint::new(1.5, 0.1).unwrap(), PhasePoint::new(3.0, 0.1).unwrap()]);
        spec.width = 8;
        spec.seeds = vec![0, 1, 2];
        spec.train.epochs = 2;
        let data = toy_data();
        let r = run_sweep(&spec, &data).unwrap();
        assert_eq!(r.runs.len(), 6);
        assert_eq!(r.aggregates.len(), 2);
        for (idx, agg) in r.aggregates.iter().enumerate() {
            let acc: Vec<f64> = r.runs.iter().filter(|x| x.cell == idx).map(|x| x.final_test_accuracy).collect();
            let (m, s) = mean_std(&acc);
            assert_eq!((agg.mean_accuracy, agg.std_accuracy), (m, s));
            assert_eq!(agg.runs, 3);
        }
        assert_eq!(run_sweep(&spec, &data).unwrap(), r);
    }

    #[test]
    fn eoc_sweep_rejects_off_curve_points() {
        let spec = SweepSpec::desk(2, vec![PhasePoint::new(2.0, 0.5).unwrap()]);
        assert!(matches!(run_eoc_sweep(&spec, &toy_data()), Err(Error::Config(_))));
    }

    #[test]
    fn pooled_std_averages_variances() {
        let cell = |s: f64| CellAggregate {
            depth: 1,
            point: PhasePoint { sigma_w2: 1.0, sigma_b2: 0.0 },
            learning_rate: 1e-3,
            runs: 2,
            converged: 2,
            mean_accuracy: 0.5,
            std_accuracy: s,
        };
        let (a, b) = (cell(0.3), cell(0.4));
        assert!((pooled_std(&[&a, &b]) - (0.125f64).sqrt()).abs() < 1e-15);
    }
}
