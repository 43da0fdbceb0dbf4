//! Command-line front end. Every subcommand prints a one-line summary and
//! optionally writes CSV or JSON artifacts.
//!
//! A `--config` file holds one JSON object per subcommand (keyed by the
//! subcommand name) plus the global `threads` and `data_dir`. Flags given on
//! the command line take precedence over the file.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::activation::ActivationKind;
use crate::datasets::{compute_stats, load_split, resolve_data_dir, subset, Split};
use crate::error::{Error, Result};
use crate::experiments::{
    eoc_points, geometric_axis, run_depth_sweep, run_eoc_sweep, run_post_evolution, run_threshold_sweep,
    PostEvolutionConfig, SweepData, SweepResult, SweepSpec, ThresholdSweepSpec,
};
use crate::fitting::{
    analytic_threshold, default_eoc_degree, fit_eoc_polynomial, fit_threshold_with, AccuracyPoint,
    ThresholdFitOptions,
};
use crate::gaussian::SIGMA2_MIN;
use crate::network::{init_network, train, NetworkConfig, TrainConfig};
use crate::output::{format_g, write_json, CsvTable, Provenance};
use crate::phase::{
    eoc_curve, line_of_uniformity, linspace, lou_eoc_intersection, phase_grid, sigma_phi_min2, FixedPointSolver,
    PhasePoint,
};

#[derive(Debug, Parser)]
#[command(name = "edge-atlas", version, about = "Mean-field phase maps and desk-scale MNIST experiments")]
pub struct Cli {
    /// JSON run configuration; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory with the MNIST IDX files (else $EDGE_ATLAS_DATA).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Line of uniformity σ_b² = π²/12 − σ_φ,min² σ_w².
    Lou(LouArgs),
    /// Edge-of-chaos curve, optionally with its polynomial fit.
    Eoc(EocArgs),
    /// Asymptotic variance and criticality quantities at one phase point.
    FixedPoint(FixedPointArgs),
    /// χ and log relative entropy on a (σ_w², σ_b²) grid.
    PhaseGrid(PhaseGridArgs),
    /// Crossing of the line of uniformity and the edge of chaos.
    Intersect(IntersectArgs),
    /// Post-activation histograms layer by layer in a deep random network.
    PostEvol(PostEvolArgs),
    /// Train one network on MNIST.
    Train(TrainArgs),
    /// Accuracy along the edge of chaos.
    SweepEoc(SweepEocArgs),
    /// Accuracy over depth and σ_w² at fixed σ_b².
    SweepDepth(SweepDepthArgs),
    /// Saturation thresholds of small networks.
    SweepThreshold(SweepThresholdArgs),
    /// Fit the hinge model to accuracy data from a CSV file.
    FitThreshold(FitThresholdArgs),
    /// Pooled pixel statistics and the analytic thresholds they imply.
    Stats(StatsArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Lou(_) => "lou",
            Command::Eoc(_) => "eoc",
            Command::FixedPoint(_) => "fixed-point",
            Command::PhaseGrid(_) => "phase-grid",
            Command::Intersect(_) => "intersect",
            Command::PostEvol(_) => "post-evol",
            Command::Train(_) => "train",
            Command::SweepEoc(_) => "sweep-eoc",
            Command::SweepDepth(_) => "sweep-depth",
            Command::SweepThreshold(_) => "sweep-threshold",
            Command::FitThreshold(_) => "fit-threshold",
            Command::Stats(_) => "stats",
        }
    }
}

pub const SUBCOMMANDS: [&str; 12] = [
    "lou",
    "eoc",
    "fixed-point",
    "phase-grid",
    "intersect",
    "post-evol",
    "train",
    "sweep-eoc",
    "sweep-depth",
    "sweep-threshold",
    "fit-threshold",
    "stats",
];

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LouArgs {
    /// Evaluate at a single weight variance.
    #[arg(long)]
    pub sigma_w2: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub from: f64,
    #[arg(long, default_value_t = 10.0)]
    pub to: f64,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
    /// CSV of (sigma_w2, sigma_b2) restricted to σ_b² ≥ 0.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EocArgs {
    #[arg(long, default_value_t = ActivationKind::Tanh)]
    pub activation: ActivationKind,
    #[arg(long, default_value_t = 1.0)]
    pub from: f64,
    #[arg(long, default_value_t = 10.0)]
    pub to: f64,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the constrained polynomial fit as JSON.
    #[arg(long)]
    pub fit_out: Option<PathBuf>,
    /// Polynomial degree (default depends on the range).
    #[arg(long)]
    pub degree: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointArgs {
    #[arg(long, default_value_t = 1.76)]
    pub sigma_w2: f64,
    #[arg(long, default_value_t = 0.05)]
    pub sigma_b2: f64,
    #[arg(long, default_value_t = ActivationKind::Tanh)]
    pub activation: ActivationKind,
    /// Starting layer variance for the iteration.
    #[arg(long)]
    pub seed_variance: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseGridArgs {
    #[arg(long, default_value_t = ActivationKind::Tanh)]
    pub activation: ActivationKind,
    #[arg(long, default_value_t = 0.5)]
    pub w_from: f64,
    #[arg(long, default_value_t = 5.0)]
    pub w_to: f64,
    #[arg(long, default_value_t = 0.0)]
    pub b_from: f64,
    #[arg(long, default_value_t = 1.0)]
    pub b_to: f64,
    #[arg(long, default_value_t = 46)]
    pub w_points: usize,
    #[arg(long, default_value_t = 41)]
    pub b_points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectArgs {
    #[arg(long, default_value_t = ActivationKind::Tanh)]
    pub activation: ActivationKind,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostEvolArgs {
    #[arg(long, default_value_t = 1.76)]
    pub sigma_w2: f64,
    #[arg(long, default_value_t = 0.05)]
    pub sigma_b2: f64,
    /// Layer-1 variances, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.57, 3.0])]
    pub sigma1: Vec<f64>,
    #[arg(long, default_value_t = 30)]
    pub depth: usize,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = ActivationKind::Tanh)]
    pub activation: ActivationKind,
    /// Full result as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Long-format histogram CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 1.76)]
    pub sigma_w2: f64,
    #[arg(long, default_value_t = 0.05)]
    pub sigma_b2: f64,
    #[arg(long, default_value_t = ActivationKind::Tanh)]
    pub activation: ActivationKind,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.8)]
    pub momentum: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub train_subset: usize,
    #[arg(long, default_value_t = 2_000)]
    pub test_subset: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEocArgs {
    #[arg(long, default_value_t = ActivationKind::Tanh)]
    pub activation: ActivationKind,
    /// Weight variances on the edge of chaos, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.5, 2.0, 4.0, 8.0])]
    pub sigma_w2: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub depth: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e-3])]
    pub lr: Vec<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub momentum: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    /// Number of seeds per point.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub master_seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub train_subset: usize,
    #[arg(long, default_value_t = 2_000)]
    pub test_subset: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepDepthArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![2, 4, 8, 12, 16, 20, 24])]
    pub depths: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 1.76, 2.5, 4.0])]
    pub sigma_w2: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub sigma_b2: f64,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.8)]
    pub momentum: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub master_seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub train_subset: usize,
    #[arg(long, default_value_t = 2_000)]
    pub test_subset: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepThresholdArgs {
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    #[arg(long, default_value_t = 8)]
    pub width: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.5, 1.0, 1.5])]
    pub sigma_b2: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub w_from: f64,
    #[arg(long, default_value_t = 40.0)]
    pub w_to: f64,
    #[arg(long, default_value_t = 16)]
    pub w_points: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.8)]
    pub momentum: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub master_seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub train_subset: usize,
    #[arg(long, default_value_t = 2_000)]
    pub test_subset: usize,
    #[arg(long, default_value_t = 200)]
    pub bootstrap: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitThresholdArgs {
    /// CSV with columns sigma_w2, accuracy, accuracy_std (`#` lines skipped).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsArgs {
    #[arg(long, default_value = "train")]
    pub split: SplitArg,
    /// Bias variances at which to report analytic thresholds.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0])]
    pub sigma_b2: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

enum Failure {
    Usage(String),
    Compute(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e)
    }
}

/// Parse `argv`, run the subcommand and return the process exit status:
/// 0 on success, 1 when the computation fails, 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli, &matches) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Global settings after merging the config file.
struct Globals {
    threads: Option<usize>,
    data_dir: Option<PathBuf>,
}

fn execute(cli: Cli, matches: &ArgMatches) -> std::result::Result<String, Failure> {
    let file = match &cli.config {
        Some(path) => Some(load_config(path)?),
        None => None,
    };
    let file_global = |key: &str| file.as_ref().and_then(|f| f.get(key)).cloned();
    let threads = match (cli.threads, file_global("threads")) {
        (Some(t), _) => Some(t),
        (None, Some(v)) => Some(serde_json::from_value(v).map_err(|e| Failure::Usage(format!("config threads: {e}")))?),
        (None, None) => None,
    };
    let data_dir = match (cli.data_dir.clone(), file_global("data_dir")) {
        (Some(d), _) => Some(d),
        (None, Some(v)) => Some(serde_json::from_value(v).map_err(|e| Failure::Usage(format!("config data_dir: {e}")))?),
        (None, None) => None,
    };
    let globals = Globals { threads, data_dir };
    let name = cli.command.name();
    let (_, sub_matches) = matches.subcommand().expect("a subcommand is required");
    let block = file.as_ref().and_then(|f| f.get(name)).cloned();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = globals.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Lou(a) => lou(merge(a, block, sub_matches, name)?),
        Command::Eoc(a) => eoc(merge(a, block, sub_matches, name)?),
        Command::FixedPoint(a) => fixed_point(merge(a, block, sub_matches, name)?),
        Command::PhaseGrid(a) => grid(merge(a, block, sub_matches, name)?),
        Command::Intersect(a) => intersect(merge(a, block, sub_matches, name)?),
        Command::PostEvol(a) => post_evol(merge(a, block, sub_matches, name)?),
        Command::Train(a) => train_cmd(merge(a, block, sub_matches, name)?, &globals),
        Command::SweepEoc(a) => sweep_eoc(merge(a, block, sub_matches, name)?, &globals),
        Command::SweepDepth(a) => sweep_depth(merge(a, block, sub_matches, name)?, &globals),
        Command::SweepThreshold(a) => sweep_threshold(merge(a, block, sub_matches, name)?, &globals),
        Command::FitThreshold(a) => fit_threshold_cmd(merge(a, block, sub_matches, name)?),
        Command::Stats(a) => stats(merge(a, block, sub_matches, name)?, &globals),
    })
}

/// Keys allowed at the top level of a run configuration.
pub fn config_top_level_keys() -> Vec<&'static str> {
    let mut keys = vec!["threads", "data_dir"];
    keys.extend(SUBCOMMANDS);
    keys
}

fn load_config(path: &Path) -> std::result::Result<Map<String, Value>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: invalid JSON: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(Failure::Usage(format!("{}: a run configuration is a JSON object", path.display())));
    };
    let allowed = config_top_level_keys();
    if let Some(bad) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Failure::Usage(format!("{}: unknown key `{bad}`", path.display())));
    }
    Ok(map)
}

/// Overlay a config block onto parsed arguments, keeping every flag that
/// was given on the command line.
fn merge<T>(args: T, block: Option<Value>, matches: &ArgMatches, name: &str) -> std::result::Result<T, Failure>
where
    T: Serialize + DeserializeOwned,
{
    let Some(block) = block else { return Ok(args) };
    let Value::Object(block) = block else {
        return Err(Failure::Usage(format!("config `{name}` must be a JSON object")));
    };
    let Value::Object(mut merged) = serde_json::to_value(&args).map_err(Error::from)? else {
        unreachable!("argument structs serialize to objects")
    };
    for (key, value) in block {
        if !merged.contains_key(&key) {
            return Err(Failure::Usage(format!("config `{name}`: unknown key `{key}`")));
        }
        let from_cli = matches.try_get_raw(&key).ok().flatten().is_some()
            && matches.value_source(&key) == Some(ValueSource::CommandLine);
        if !from_cli {
            merged.insert(key, value);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Failure::Usage(format!("config `{name}`: {e}")))
}

/// What an artifact records about the run that produced it.
fn run_config<T: Serialize>(command: &str, args: &T) -> Value {
    json!({ "command": command, "args": args })
}

fn artifact<T: Serialize, R: Serialize>(command: &str, args: &T, result: &R) -> Result<Value> {
    let config = run_config(command, args);
    Ok(json!({
        "run_config": config,
        "provenance": Provenance::of(&config)?,
        "result": result,
    }))
}

fn csv_for<T: Serialize>(command: &str, args: &T, header: &[&str]) -> Result<CsvTable> {
    CsvTable::new(header).with_config(&run_config(command, args))
}

fn lou(a: LouArgs) -> std::result::Result<String, Failure> {
    let phi_min = sigma_phi_min2();
    if let Some(path) = &a.out {
        if a.points < 2 {
            return Err(Failure::Usage("--points must be at least 2".into()));
        }
        let mut t = csv_for("lou", &a, &["sigma_w2", "sigma_b2"])?;
        for w in linspace(a.from, a.to, a.points) {
            let b = line_of_uniformity(w);
            if b >= 0.0 {
                t.push_floats(&[w, b]);
            }
        }
        t.write(path)?;
    }
    Ok(match a.sigma_w2 {
        Some(w) => format!("sigma_b2 = {} at sigma_w2 = {}", format_g(line_of_uniformity(w)), format_g(w)),
        None => format!(
            "line of uniformity: sigma_b2 = {} - {} * sigma_w2",
            format_g(SIGMA2_MIN),
            format_g(phi_min)
        ),
    })
}

fn eoc(a: EocArgs) -> std::result::Result<String, Failure> {
    if a.points < 2 {
        return Err(Failure::Usage("--points must be at least 2".into()));
    }
    let act = a.activation.activation();
    let curve = eoc_curve(a.from, a.to, a.points, &act)?;
    if let Some(path) = &a.out {
        let mut t = csv_for("eoc", &a, &["sigma_w2", "sigma_b2", "sigma_star2"])?;
        for c in &curve.points {
            t.push_floats(&[c.point.sigma_w2, c.point.sigma_b2, c.sigma_star2]);
        }
        t.write(path)?;
    }
    let mut summary = match curve.computable_range() {
        Some((lo, hi)) => format!(
            "{} edge of chaos: {} points on sigma_w2 in [{}, {}], {} gaps",
            a.activation,
            curve.points.len(),
            format_g(lo),
            format_g(hi),
            curve.gaps.len()
        ),
        None => format!("{} edge of chaos: no critical points in [{}, {}]", a.activation, a.from, a.to),
    };
    if let Some(path) = &a.fit_out {
        let pts: Vec<PhasePoint> = curve.phase_points().into_iter().filter(|p| p.sigma_w2 >= 1.0).collect();
        let degree = a.degree.unwrap_or_else(|| default_eoc_degree(a.to));
        let fit = fit_eoc_polynomial(&pts, degree)?;
        summary.push_str(&format!("; degree-{degree} fit rms {}", format_g(fit.rms_residual)));
        write_json(path, &artifact("eoc", &a, &fit)?)?;
    }
    Ok(summary)
}

fn fixed_point(a: FixedPointArgs) -> std::result::Result<String, Failure> {
    let point = PhasePoint::new(a.sigma_w2, a.sigma_b2)?;
    let mut solver = FixedPointSolver::default();
    if let Some(s) = a.seed_variance {
        solver = solver.with_seed(s);
    }
    let sol = solver.solve(point, &a.activation.activation())?;
    if let Some(path) = &a.out {
        write_json(path, &artifact("fixed-point", &a, &sol)?)?;
    }
    let opt = |x: Option<f64>| x.map_or_else(|| "none".to_string(), format_g);
    Ok(format!(
        "sigma_star2 = {} chi = {} xi = {} chi_tilde = {} xi_tilde = {}",
        format_g(sol.sigma_star2),
        format_g(sol.chi),
        opt(sol.xi),
        format_g(sol.chi_tilde),
        opt(sol.xi_tilde)
    ))
}

fn grid(a: PhaseGridArgs) -> std::result::Result<String, Failure> {
    if a.w_points == 0 || a.b_points == 0 {
        return Err(Failure::Usage("grid resolution must be positive".into()));
    }
    let g = phase_grid((a.w_from, a.w_to), (a.b_from, a.b_to), (a.w_points, a.b_points), &a.activation.activation())?;
    if let Some(path) = &a.out {
        let mut t = csv_for("phase-grid", &a, &["sigma_w2", "sigma_b2", "chi", "log_rel_entropy", "sigma_star2"])?;
        for (i, w) in g.w_axis.iter().enumerate() {
            for (j, b) in g.b_axis.iter().enumerate() {
                t.push_floats(&[*w, *b, g.chi_field[i][j], g.entropy_field[i][j], g.sigma_star2_field[i][j]]);
            }
        }
        t.write(path)?;
    }
    let cells = g.w_axis.len() * g.b_axis.len();
    let chaotic = g.chi_field.iter().flatten().filter(|c| **c > 1.0).count();
    let missing = g.chi_field.iter().flatten().filter(|c| c.is_nan()).count();
    Ok(format!("{cells} cells: {chaotic} chaotic, {} ordered, {missing} missing", cells - chaotic - missing))
}

fn intersect(a: IntersectArgs) -> std::result::Result<String, Failure> {
    let p = lou_eoc_intersection(&a.activation.activation())?;
    if let Some(path) = &a.out {
        write_json(path, &artifact("intersect", &a, &p)?)?;
    }
    Ok(format!("intersection (sigma_w2, sigma_b2) = ({}, {})", format_g(p.sigma_w2), format_g(p.sigma_b2)))
}

fn post_evol(a: PostEvolArgs) -> std::result::Result<String, Failure> {
    let config = PostEvolutionConfig {
        point: PhasePoint::new(a.sigma_w2, a.sigma_b2)?,
        sigma1_list: a.sigma1.clone(),
        depth: a.depth,
        width: a.width,
        n_samples: a.samples,
        bins: a.bins,
        seed: a.seed,
        activation: a.activation,
    };
    let r = run_post_evolution(&config)?;
    if let Some(path) = &a.out {
        write_json(path, &artifact("post-evol", &a, &r)?)?;
    }
    if let Some(path) = &a.csv {
        let mut t = csv_for("post-evol", &a, &["sigma1_2", "layer", "bin_lower", "bin_upper", "density"])?;
        for run in &r.runs {
            for h in &run.layers {
                let total: u64 = h.counts.iter().sum();
                let width = (h.upper - h.lower) / h.counts.len() as f64;
                for (k, c) in h.counts.iter().enumerate() {
                    let lo = h.lower + width * k as f64;
                    t.push_floats(&[run.sigma1_2, h.layer as f64, lo, lo + width, *c as f64 / (total as f64 * width)]);
                }
            }
        }
        t.write(path)?;
    }
    let probe = a.depth.min(10);
    let ks = r.ks_at(probe).map_or(0.0, |k| k.max);
    Ok(format!("max pairwise KS distance at layer {probe}: {}", format_g(ks)))
}

fn load_data(
    globals: &Globals,
    train_subset: usize,
    test_subset: usize,
    seed: u64,
) -> std::result::Result<SweepData, Failure> {
    let dir = resolve_data_dir(globals.data_dir.as_deref()).map_err(|e| Failure::Usage(e.to_string()))?;
    let train_set = load_split(&dir, Split::Train)?;
    let test_set = load_split(&dir, Split::Test)?;
    Ok(SweepData {
        train: subset(&train_set, train_subset, seed)?.to_labeled(),
        test: subset(&test_set, test_subset, seed.wrapping_add(1))?.to_labeled(),
    })
}

fn train_cmd(a: TrainArgs, globals: &Globals) -> std::result::Result<String, Failure> {
    let data = load_data(globals, a.train_subset, a.test_subset, a.seed)?;
    let config = NetworkConfig {
        depth: a.depth,
        width: a.width,
        input_dim: data.train.features.ncols(),
        output_dim: 10,
        activation: a.activation,
        init: PhasePoint::new(a.sigma_w2, a.sigma_b2)?,
        seed: a.seed,
    };
    let tcfg = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch_size,
        momentum: a.momentum,
        epochs: a.epochs,
        rng_seed: a.seed.wrapping_add(1),
    };
    let mut net = init_network(config)?;
    let record = train(&mut net, &data.train, &data.test, &tcfg)?;
    if let Some(path) = &a.out {
        write_json(path, &artifact("train", &a, &record)?)?;
    }
    Ok(format!("test accuracy {} after {} epochs", format_g(record.final_test_accuracy()), record.epochs.len()))
}

fn write_sweep<T: Serialize>(
    command: &str,
    args: &T,
    result: &SweepResult,
    out: &Option<PathBuf>,
    csv: &Option<PathBuf>,
) -> Result<()> {
    if let Some(path) = out {
        write_json(path, &artifact(command, args, result)?)?;
    }
    if let Some(path) = csv {
        let mut t = csv_for(
            command,
            args,
            &["depth", "sigma_w2", "sigma_b2", "learning_rate", "runs", "converged", "mean_accuracy", "std_accuracy"],
        )?;
        for c in &result.aggregates {
            t.push_floats(&[
                c.depth as f64,
                c.point.sigma_w2,
                c.point.sigma_b2,
                c.learning_rate,
                c.runs as f64,
                c.converged as f64,
                c.mean_accuracy,
                c.std_accuracy,
            ]);
        }
        t.write(path)?;
    }
    Ok(())
}

fn sweep_summary(result: &SweepResult) -> String {
    let best = result
        .aggregates
        .iter()
        .filter(|c| c.mean_accuracy.is_finite())
        .max_by(|a, b| a.mean_accuracy.total_cmp(&b.mean_accuracy));
    match best {
        Some(c) => format!(
            "{} runs over {} cells; best mean accuracy {} at L = {}, (sigma_w2, sigma_b2) = ({}, {})",
            result.runs.len(),
            result.aggregates.len(),
            format_g(c.mean_accuracy),
            c.depth,
            format_g(c.point.sigma_w2),
            format_g(c.point.sigma_b2)
        ),
        None => format!("{} runs, none converged", result.runs.len()),
    }
}

fn seeds(n: u64) -> std::result::Result<Vec<u64>, Failure> {
    if n == 0 {
        return Err(Failure::Usage("--seeds must be positive".into()));
    }
    Ok((0..n).collect())
}

fn sweep_eoc(a: SweepEocArgs, globals: &Globals) -> std::result::Result<String, Failure> {
    let spec = SweepSpec {
        activation: a.activation,
        depths: vec![a.depth],
        width: a.width,
        points: eoc_points(&a.sigma_w2, a.activation)?,
        learning_rates: a.lr.clone(),
        train: TrainConfig {
            learning_rate: a.lr.first().copied().unwrap_or(1e-3),
            batch_size: a.batch_size,
            momentum: a.momentum,
            epochs: a.epochs,
            rng_seed: 0,
        },
        seeds: seeds(a.seeds)?,
        master_seed: a.master_seed,
        train_subset: a.train_subset,
        test_subset: a.test_subset,
    };
    let data = load_data(globals, a.train_subset, a.test_subset, a.master_seed)?;
    let result = run_eoc_sweep(&spec, &data)?;
    write_sweep("sweep-eoc", &a, &result, &a.out, &a.csv)?;
    Ok(sweep_summary(&result))
}

fn sweep_depth(a: SweepDepthArgs, globals: &Globals) -> std::result::Result<String, Failure> {
    let points = a.sigma_w2.iter().map(|&w| PhasePoint::new(w, a.sigma_b2)).collect::<Result<Vec<_>>>()?;
    let spec = SweepSpec {
        activation: ActivationKind::Tanh,
        depths: a.depths.clone(),
        width: a.width,
        points,
        learning_rates: vec![a.lr],
        train: TrainConfig {
            learning_rate: a.lr,
            batch_size: a.batch_size,
            momentum: a.momentum,
            epochs: a.epochs,
            rng_seed: 0,
        },
        seeds: seeds(a.seeds)?,
        master_seed: a.master_seed,
        train_subset: a.train_subset,
        test_subset: a.test_subset,
    };
    let data = load_data(globals, a.train_subset, a.test_subset, a.master_seed)?;
    let result = run_depth_sweep(&spec, &data)?;
    write_sweep("sweep-depth", &a, &result, &a.out, &a.csv)?;
    Ok(sweep_summary(&result))
}

fn sweep_threshold(a: SweepThresholdArgs, globals: &Globals) -> std::result::Result<String, Failure> {
    let spec = ThresholdSweepSpec {
        depth: a.depth,
        width: a.width,
        sigma_b2_list: a.sigma_b2.clone(),
        sigma_w2_axis: geometric_axis(a.w_from, a.w_to, a.w_points),
        train: TrainConfig {
            learning_rate: a.lr,
            batch_size: a.batch_size,
            momentum: a.momentum,
            epochs: a.epochs,
            rng_seed: 0,
        },
        seeds: seeds(a.seeds)?,
        master_seed: a.master_seed,
        train_subset: a.train_subset,
        test_subset: a.test_subset,
        bootstrap_resamples: a.bootstrap,
    };
    let data = load_data(globals, a.train_subset, a.test_subset, a.master_seed)?;
    let result = run_threshold_sweep(&spec, &data)?;
    if let Some(path) = &a.out {
        write_json(path, &artifact("sweep-threshold", &a, &result)?)?;
    }
    if let Some(path) = &a.csv {
        let mut t = csv_for("sweep-threshold", &a, &["sigma_b2", "sigma_w2", "accuracy", "accuracy_std"])?;
        for e in &result.entries {
            for p in &e.data {
                t.push_floats(&[e.sigma_b2, p.sigma_w2, p.accuracy, p.accuracy_std]);
            }
        }
        t.write(path)?;
    }
    let parts: Vec<String> = result
        .entries
        .iter()
        .map(|e| match &e.fit {
            Some(f) => format!("sigma_b2 {}: {}", format_g(e.sigma_b2), format_g(f.threshold)),
            None => format!("sigma_b2 {}: no knee", format_g(e.sigma_b2)),
        })
        .collect();
    Ok(format!("fitted thresholds: {}", parts.join("; ")))
}

/// Read `sigma_w2,accuracy,accuracy_std` columns (by header name) from a
/// CSV file; `#` lines are skipped.
pub fn read_accuracy_csv(path: &Path) -> Result<Vec<AccuracyPoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| Error::Config(format!("{}: {e}", path.display()))))
        .collect()
}

fn fit_threshold_cmd(a: FitThresholdArgs) -> std::result::Result<String, Failure> {
    let Some(input) = &a.input else {
        return Err(Failure::Usage("fit-threshold needs --input".into()));
    };
    let data = read_accuracy_csv(input)?;
    let fit = fit_threshold_with(&data, &ThresholdFitOptions { bootstrap_resamples: a.bootstrap, bootstrap_seed: a.seed })?;
    if let Some(path) = &a.out {
        write_json(path, &artifact("fit-threshold", &a, &fit)?)?;
    }
    Ok(format!(
        "threshold {} ± {}, a_max {}, rate {}",
        format_g(fit.threshold),
        format_g(fit.uncertainties.threshold),
        format_g(fit.a_max),
        format_g(fit.rate)
    ))
}

#[derive(Debug, Serialize)]
struct StatsReport {
    input_variance: f64,
    input_mean_sq: f64,
    images: usize,
    thresholds: Vec<ThresholdEstimate>,
}

#[derive(Debug, Serialize)]
struct ThresholdEstimate {
    depth: usize,
    sigma_b2: f64,
    sigma_w2: Option<f64>,
    error: Option<String>,
}

fn stats(a: StatsArgs, globals: &Globals) -> std::result::Result<String, Failure> {
    let dir = resolve_data_dir(globals.data_dir.as_deref()).map_err(|e| Failure::Usage(e.to_string()))?;
    let set = load_split(&dir, a.split.into())?;
    let s = compute_stats(&set)?;
    let mut thresholds = Vec::new();
    for &b in &a.sigma_b2 {
        for depth in [1, 2] {
            let r = analytic_threshold(depth, b, &s);
            thresholds.push(ThresholdEstimate {
                depth,
                sigma_b2: b,
                sigma_w2: r.as_ref().ok().copied(),
                error: r.err().map(|e| e.to_string()),
            });
        }
    }
    let report = StatsReport { input_variance: s.input_variance, input_mean_sq: s.input_mean_sq, images: set.len(), thresholds };
    if let Some(path) = &a.out {
        write_json(path, &artifact("stats", &a, &report)?)?;
    }
    let mut line = format!("sigma0_2 = {} mu0_2 = {}", format_g(s.input_variance), format_g(s.input_mean_sq));
    for t in &report.thresholds {
        if let Some(w) = t.sigma_w2 {
            line.push_str(&format!("; L={} threshold({}) = {}", t.depth, format_g(t.sigma_b2), format_g(w)));
        }
    }
    Ok(line)
}

/// Flush stdout; used by the binary before exiting.
pub fn flush() {
    let _ = std::io::stdout().flush();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_subcommand_is_registered() {
        let cmd = Cli::command();
        let names: Vec<&str> = cmd.get_subcommands().map(|s| s.get_name()).collect();
        assert_eq!(names, SUBCOMMANDS.to_vec());
    }

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn accuracy_csv_with_header_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "# note\naccuracy_std,sigma_w2,accuracy\n0.01,1,0.9\n0.02,2,0.8\n").unwrap();
        let rows = read_accuracy_csv(&p).unwrap();
        assert_eq!(rows[1], AccuracyPoint { sigma_w2: 2.0, accuracy: 0.8, accuracy_std: 0.02 });
    }
}
