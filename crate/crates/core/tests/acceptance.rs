//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use edge_atlas::datasets::{compute_stats, load_split, subset, ImageSet, Split};
use edge_atlas::experiments::{
    eoc_points, pooled_std, run_depth_sweep, run_eoc_sweep, run_post_evolution, run_threshold_sweep,
    variance_bridge, CellAggregate, PostEvolutionConfig, SweepData, SweepResult, SweepSpec, ThresholdSweepSpec,
};
use edge_atlas::fitting::{analytic_threshold, fit_eoc_polynomial, DatasetStats};
use edge_atlas::gaussian::{chi_tilde, chi_tilde_cubic_form, variance_map, GaussianSpec, SIGMA2_MIN};
use edge_atlas::network::{init_network, LabeledData, Network, NetworkConfig};
use edge_atlas::phase::{
    critical_point, eoc_curve, lou_eoc_intersection, sigma_phi_min2, solve_eoc_point, EocSearch, FixedPointSolver,
};
use edge_atlas::quadrature::Quadrature;
use edge_atlas::{Activation, ActivationKind, PhasePoint};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn tanh() -> Activation {
    Activation::tanh()
}

struct Mnist {
    train: ImageSet,
    test: ImageSet,
    load_time: Duration,
}

fn mnist() -> Result<&'static Mnist, String> {
    static DATA: OnceLock<Result<Mnist, String>> = OnceLock::new();
    DATA.get_or_init(|| {
        let dir = std::env::var_os("EDGE_ATLAS_DATA")
            .map(PathBuf::from)
            .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
        let start = Instant::now();
        let train = load_split(&dir, Split::Train).map_err(|e| format!("MNIST unavailable: {e}"))?;
        let test = load_split(&dir, Split::Test).map_err(|e| format!("MNIST unavailable: {e}"))?;
        Ok(Mnist { train, test, load_time: start.elapsed() })
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn desk_data(master_seed: u64) -> Result<SweepData, String> {
    let m = mnist()?;
    let train = subset(&m.train, 10_000, master_seed).map_err(|e| e.to_string())?;
    let test = subset(&m.test, 2_000, master_seed.wrapping_add(1)).map_err(|e| e.to_string())?;
    Ok(SweepData { train: train.to_labeled(), test: test.to_labeled() })
}

fn lou_constants() -> Outcome {
    let (phi_min, t) = timed(sigma_phi_min2);
    let exact = SIGMA2_MIN == PI * PI / 12.0;
    check(
        exact && within(phi_min, 0.359, 0.002) && t < Duration::from_secs(1),
        format!("sigma2_min = {SIGMA2_MIN:.12} (pi^2/12), sigma_phi_min2 = {phi_min:.5}, {t:.2?}"),
    )
}

fn intersection() -> Outcome {
    let (p, t) = timed(|| lou_eoc_intersection(&tanh()));
    let p = p.map_err(|e| e.to_string())?;
    check(
        within(p.sigma_w2, 2.0, 0.02) && within(p.sigma_b2, 0.104, 0.005) && t < Duration::from_secs(10),
        format!("({:.4}, {:.4}), {t:.2?}", p.sigma_w2, p.sigma_b2),
    )
}

fn eoc_anchors() -> Outcome {
    let act = tanh();
    let (values, t) = timed(|| -> edge_atlas::Result<(f64, f64, f64)> {
        let b176 = solve_eoc_point(1.76, &act)?;
        let b1 = critical_point(1.0, &act, &EocSearch::default())?.point.sigma_b2;
        let h = 1e-3;
        let slope = (solve_eoc_point(1.0 + h, &act)? - b1) / h;
        Ok((b176, b1, slope))
    });
    let (b176, b1, slope) = values.map_err(|e| e.to_string())?;
    check(
        within(b176, 0.05, 0.005) && within(b1, 0.0, 1e-3) && within(slope, 0.0, 0.01) && t < Duration::from_secs(10),
        format!("EOC(1.76) = {b176:.5}, EOC(1) = {b1:.2e}, slope at 1 = {slope:.2e}, {t:.2?}"),
    )
}

fn eoc_fit() -> Outcome {
    let act = tanh();
    let (fit, t) = timed(|| -> Result<_, String> {
        let curve = eoc_curve(1.0, 10.0, 91, &act).map_err(|e| e.to_string())?;
        fit_eoc_polynomial(&curve.phase_points(), 9).map_err(|e| e.to_string())
    });
    let fit = fit?;
    let c2 = fit.coefficient(2).unwrap_or(f64::NAN);
    let c3 = fit.coefficient(3).unwrap_or(f64::NAN);
    check(
        fit.rms_residual < 1e-3
            && within(c3, 0.778, 0.25 * 0.778)
            && within(c2, 0.0190, 0.5 * 0.0190)
            && t < Duration::from_secs(30),
        format!("rms {:.2e}, c2 = {c2:.4} (0.0190), c3 = {c3:.4} (0.778), {t:.2?}", fit.rms_residual),
    )
}

fn fixed_point() -> Outcome {
    let act = tanh();
    let p = PhasePoint::new(1.76, 0.05).map_err(|e| e.to_string())?;
    let roots = [0.01, 1.0, 10.0]
        .iter()
        .map(|&s| FixedPointSolver::default().with_seed(s).solve(p, &act).map(|r| r.sigma_star2))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let spread = roots.iter().fold(0.0f64, |m, r| m.max((r - roots[0]).abs()));
    check(
        within(roots[0], 0.57, 0.01) && spread < 1e-8,
        format!("sigma_star2 = {:.6}, spread over seeds {spread:.1e}", roots[0]),
    )
}

fn chi_tilde_numerics() -> Outcome {
    let act = tanh();
    let quad = Quadrature::default();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst_form = 0.0f64;
    let mut worst_identity = 0.0f64;
    let mut bound_ok = true;
    for _ in 0..20 {
        let w = rng.random_range(0.5..5.0);
        let b = rng.random_range(0.0..1.0);
        let p = PhasePoint::new(w, b).map_err(|e| e.to_string())?;
        let sol = FixedPointSolver::default().solve(p, &act).map_err(|e| e.to_string())?;
        let s = sol.sigma_star2;
        let ct = chi_tilde(w, s, &act);
        let cubic = chi_tilde_cubic_form(w, s, &act, &quad).map_err(|e| e.to_string())?;
        worst_form = worst_form.max((ct - cubic).abs());
        bound_ok &= ct >= 0.0 && ct <= 2.0 * w * s;
        let h = 1e-4 * s.max(1e-2);
        let v = |x: f64| variance_map(GaussianSpec::new(x).expect("positive"), &act);
        let fd = w * (v(s + h) - v(s - h)) / (2.0 * h);
        worst_identity = worst_identity.max((fd - (sol.chi - sol.chi_tilde)).abs());
    }
    check(
        worst_form < 1e-8 && bound_ok && worst_identity < 1e-5,
        format!(
            "integral forms differ by {worst_form:.1e}, bound {}, derivative identity off by {worst_identity:.1e}",
            if bound_ok { "holds" } else { "violated" }
        ),
    )
}

fn mnist_stats() -> Outcome {
    let m = mnist()?;
    let (stats, t) = timed(|| compute_stats(&m.train));
    let s = stats.map_err(|e| e.to_string())?;
    check(
        within(s.input_variance, 0.095, 0.005) && within(s.input_mean_sq, 0.017, 0.003) && t < Duration::from_secs(5),
        format!(
            "sigma0_2 = {:.5}, mu0_2 = {:.5}, {t:.2?} (load {:.2?})",
            s.input_variance, s.input_mean_sq, m.load_time
        ),
    )
}

fn analytic_thresholds() -> Outcome {
    let m = mnist()?;
    let stats: DatasetStats = compute_stats(&m.train).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for (depth, intercept) in [(1usize, 7.35), (2, 3.5)] {
        for b in [0.0, 1.0] {
            let expected = intercept + 8.93 * b;
            match analytic_threshold(depth, b, &stats) {
                Ok(v) => {
                    ok &= within(v, expected, 0.2);
                    parts.push(format!("L={depth} b={b}: {v:.3} (want {expected:.2})"));
                }
                Err(e) => {
                    ok = false;
                    parts.push(format!("L={depth} b={b}: {e} (want {expected:.2})"));
                }
            }
        }
    }
    check(ok, parts.join("; "))
}

fn loss(net: &Network, data: &LabeledData) -> f64 {
    net.loss_and_correct(data.features.view(), &data.labels).expect("shapes agree").0
}

/// Largest relative error between backprop and central differences over
/// every weight and bias.
fn gradient_error(kind: ActivationKind) -> Result<f64, String> {
    let config = NetworkConfig {
        depth: 2,
        width: 3,
        input_dim: 4,
        output_dim: 2,
        activation: kind,
        init: PhasePoint::new(1.5, 0.3).map_err(|e| e.to_string())?,
        seed: 9,
    };
    let mut net = init_network(config).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let features = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
    let data = LabeledData::new(features, vec![0, 1, 1, 0, 1]).map_err(|e| e.to_string())?;
    let cache = net.forward(data.features.view()).map_err(|e| e.to_string())?;
    let grads = net.backward(&cache, &data.labels).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let rel = |analytic: f64, numeric: f64| (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
    let mut worst = 0.0f64;
    for l in 0..net.layers.len() {
        let shape = net.layers[l].weights.dim();
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                let orig = net.layers[l].weights[[i, j]];
                net.layers[l].weights[[i, j]] = orig + h;
                let up = loss(&net, &data);
                net.layers[l].weights[[i, j]] = orig - h;
                let down = loss(&net, &data);
                net.layers[l].weights[[i, j]] = orig;
                worst = worst.max(rel(grads.weights[l][[i, j]], (up - down) / (2.0 * h)));
            }
        }
        for k in 0..net.layers[l].biases.len() {
            let orig = net.layers[l].biases[k];
            net.layers[l].biases[k] = orig + h;
            let up = loss(&net, &data);
            net.layers[l].biases[k] = orig - h;
            let down = loss(&net, &data);
            net.layers[l].biases[k] = orig;
            worst = worst.max(rel(grads.biases[l][k], (up - down) / (2.0 * h)));
        }
    }
    Ok(worst)
}

fn gradients() -> Outcome {
    let tanh_err = gradient_error(ActivationKind::Tanh)?;
    let swish_err = gradient_error(ActivationKind::Swish)?;
    check(
        tanh_err < 1e-4 && swish_err < 1e-4,
        format!("max relative error tanh {tanh_err:.1e}, swish {swish_err:.1e}"),
    )
}

fn bridge() -> Outcome {
    let points = [(1.76, 0.05), (1.0, 0.0), (2.0, 0.104), (0.8, 0.3), (4.0, 0.05)];
    let (results, t) = timed(|| {
        points
            .iter()
            .enumerate()
            .map(|(k, &(w, b))| {
                let p = PhasePoint::new(w, b).map_err(|e| e.to_string())?;
                variance_bridge(p, 10, 256, 24, 64, 100 + k as u64).map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, String>>()
    });
    let results = results?;
    let worst = results.iter().map(|r| r.max_z_score()).fold(0.0, f64::max);
    check(
        worst < 3.0 && t < Duration::from_secs(30),
        format!("largest |z| over 5 points x 10 layers = {worst:.2}, {t:.2?}"),
    )
}

fn gap(better: &CellAggregate, worse: &CellAggregate) -> (f64, f64) {
    (better.mean_accuracy - worse.mean_accuracy, pooled_std(&[better, worse]))
}

fn cell(r: &SweepResult, depth: usize, w: f64) -> Result<&CellAggregate, String> {
    r.cell(depth, w).ok_or_else(|| format!("no cell at L={depth}, sigma_w2={w}"))
}

fn depth_ordering() -> Outcome {
    let data = desk_data(0)?;
    let points = vec![PhasePoint::new(1.76, 0.05).unwrap(), PhasePoint::new(4.0, 0.05).unwrap()];
    let spec = SweepSpec::desk(24, points);
    let (r, t) = timed(|| run_depth_sweep(&spec, &data));
    let r = r.map_err(|e| e.to_string())?;
    let (on, off) = (cell(&r, 24, 1.76)?, cell(&r, 24, 4.0)?);
    let (d, s) = gap(on, off);
    check(
        d > 2.0 * s && t < Duration::from_secs(1800),
        format!(
            "L=24: (1.76, 0.05) {:.4}, (4.0, 0.05) {:.4}, gap {d:.4} vs 2 pooled std {:.4}, {t:.1?}",
            on.mean_accuracy,
            off.mean_accuracy,
            2.0 * s
        ),
    )
}

fn eoc_ordering() -> Outcome {
    let data = desk_data(0)?;
    let points = eoc_points(&[2.0, 8.0], ActivationKind::Tanh).map_err(|e| e.to_string())?;
    let spec = SweepSpec::desk(20, points);
    let (r, t) = timed(|| run_eoc_sweep(&spec, &data));
    let r = r.map_err(|e| e.to_string())?;
    let (two, eight) = (cell(&r, 20, 2.0)?, cell(&r, 20, 8.0)?);
    let (d, s) = gap(two, eight);
    check(
        d > 2.0 * s && t < Duration::from_secs(1800),
        format!(
            "L=20 on the EOC: sigma_w2=2 {:.4}, sigma_w2=8 {:.4}, gap {d:.4} vs 2 pooled std {:.4}, {t:.1?}",
            two.mean_accuracy,
            eight.mean_accuracy,
            2.0 * s
        ),
    )
}

fn threshold_ordering() -> Outcome {
    let data = desk_data(0)?;
    let stats = compute_stats(&mnist()?.train).map_err(|e| e.to_string())?;
    let spec = ThresholdSweepSpec::default();
    let (r, t) = timed(|| run_threshold_sweep(&spec, &data));
    let r = r.map_err(|e| e.to_string())?;
    let mut ok = t < Duration::from_secs(1800);
    let mut previous = f64::INFINITY;
    let mut parts = Vec::new();
    for e in &r.entries {
        let Some(fit) = &e.fit else {
            ok = false;
            parts.push(format!("b={}: no fit ({})", e.sigma_b2, e.fit_error.as_deref().unwrap_or("?")));
            continue;
        };
        let analytic = analytic_threshold(spec.depth, e.sigma_b2, &stats);
        let exceeds = match &analytic {
            Ok(a) => fit.threshold > *a,
            // Saturated from the start: any positive threshold lies beyond it.
            Err(_) => fit.threshold > 0.0,
        };
        ok &= exceeds && fit.threshold <= previous;
        previous = fit.threshold;
        let analytic = analytic.map_or("none".to_string(), |a| format!("{a:.2}"));
        parts.push(format!("b={}: {:.2} ± {:.2} (analytic {analytic})", e.sigma_b2, fit.threshold, fit.uncertainties.threshold));
    }
    parts.push(format!("{t:.1?}"));
    check(ok, parts.join("; "))
}

fn post_activation() -> Outcome {
    let r = run_post_evolution(&PostEvolutionConfig::default()).map_err(|e| e.to_string())?;
    let ks = r.ks_at(10).ok_or("layer 10 missing")?;
    check(ks.max < 0.05, format!("max pairwise KS at layer 10 = {:.4}", ks.max))
}

fn swish() -> Outcome {
    let act = Activation::swish();
    let curve = eoc_curve(1.5, 4.5, 61, &act).map_err(|e| e.to_string())?;
    let (lo, hi) = curve.computable_range().ok_or("no computable SWISH EOC points")?;
    let overlaps = lo <= 3.4 && hi >= 1.97;
    let monotone = curve.points.windows(2).all(|p| p[1].point.sigma_b2 < p[0].point.sigma_b2);
    let data = desk_data(0)?;
    let ws = [2.0, 2.5, 3.0, 3.4];
    let points = eoc_points(&ws, ActivationKind::Swish).map_err(|e| e.to_string())?;
    let spec = SweepSpec { activation: ActivationKind::Swish, ..SweepSpec::desk(20, points) };
    let r = run_eoc_sweep(&spec, &data).map_err(|e| e.to_string())?;
    let cells = ws.iter().map(|&w| cell(&r, 20, w)).collect::<Result<Vec<_>, _>>()?;
    let best = cells.iter().max_by(|a, b| a.mean_accuracy.total_cmp(&b.mean_accuracy)).expect("cells");
    let flat = cells.iter().all(|c| {
        let (d, s) = gap(best, c);
        d <= 2.0 * s
    });
    let accs: Vec<String> = cells.iter().map(|c| format!("{:.3}", c.mean_accuracy)).collect();
    check(
        overlaps && monotone && flat,
        format!(
            "computable range [{lo:.3}, {hi:.3}], sigma_b2 {} along it, L=20 accuracies {}",
            if monotone { "decreasing" } else { "not monotone" },
            accs.join(", ")
        ),
    )
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 15] = [
        ("1", "line of uniformity constants", lou_constants),
        ("2", "LOU/EOC intersection", intersection),
        ("3", "EOC anchor points", eoc_anchors),
        ("4", "EOC polynomial fit", eoc_fit),
        ("5", "fixed point at (1.76, 0.05)", fixed_point),
        ("6", "chi-tilde numerics", chi_tilde_numerics),
        ("7", "MNIST statistics", mnist_stats),
        ("8", "analytic thresholds", analytic_thresholds),
        ("9", "gradient checks", gradients),
        ("10", "variance recursion vs width-256 networks", bridge),
        ("11a", "depth sweep ordering", depth_ordering),
        ("11b", "EOC sweep ordering", eoc_ordering),
        ("11c", "threshold sweep ordering", threshold_ordering),
        ("12", "post-activation convergence", post_activation),
        ("13", "SWISH edge of chaos", swish),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {id:>3} {name}: {detail}"),
            Err(detail) => {
                println!("FAIL {id:>3} {name}: {detail}");
                failed.push(id);
            }
        }
    }
    if !failed.is_empty() {
        println!("acceptance: {} failing ({})", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
    println!("acceptance: all criteria pass");
}
