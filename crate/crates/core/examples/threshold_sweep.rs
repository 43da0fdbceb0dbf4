//! Saturation thresholds of N=8, L=1 networks: hinge fits of accuracy
//! against sigma_w^2 for several bias variances. Takes about a minute.

use edge_atlas::datasets::{compute_stats, load_split, resolve_data_dir, subset, Split};
use edge_atlas::experiments::{run_threshold_sweep, SweepData, ThresholdSweepSpec};
use edge_atlas::fitting::analytic_threshold;

fn main() -> edge_atlas::Result<()> {
    let arg = std::env::args_os().nth(1).map(std::path::PathBuf::from);
    let dir = resolve_data_dir(arg.as_deref())?;
    let train = load_split(&dir, Split::Train)?;
    let stats = compute_stats(&train)?;
    let data = SweepData {
        train: subset(&train, 10_000, 0)?.to_labeled(),
        test: subset(&load_split(&dir, Split::Test)?, 2_000, 1)?.to_labeled(),
    };
    let spec = ThresholdSweepSpec::default();
    let result = run_threshold_sweep(&spec, &data)?;
    for e in &result.entries {
        let analytic = analytic_threshold(spec.depth, e.sigma_b2, &stats)
            .map_or("none".to_string(), |a| format!("{a:.2}"));
        match &e.fit {
            Some(f) => println!(
                "sigma_b^2 = {}: threshold {:.2} ± {:.2}, a_max {:.3}, rate {:.4} (analytic {analytic})",
                e.sigma_b2, f.threshold, f.uncertainties.threshold, f.a_max, f.rate
            ),
            None => println!("sigma_b^2 = {}: {}", e.sigma_b2, e.fit_error.as_deref().unwrap_or("no fit")),
        }
    }
    Ok(())
}
