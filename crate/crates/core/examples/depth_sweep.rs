//! Accuracy against depth on and off the edge of chaos (sigma_b^2 = 0.05).
//! Five seeds per cell on a 10k MNIST subset; takes a few minutes.

use edge_atlas::datasets::{load_split, resolve_data_dir, subset, Split};
use edge_atlas::experiments::{run_depth_sweep, SweepData, SweepSpec};
use edge_atlas::PhasePoint;

fn main() -> edge_atlas::Result<()> {
    let arg = std::env::args_os().nth(1).map(std::path::PathBuf::from);
    let dir = resolve_data_dir(arg.as_deref())?;
    let data = SweepData {
        train: subset(&load_split(&dir, Split::Train)?, 10_000, 0)?.to_labeled(),
        test: subset(&load_split(&dir, Split::Test)?, 2_000, 1)?.to_labeled(),
    };
    let points = vec![PhasePoint::new(1.76, 0.05)?, PhasePoint::new(4.0, 0.05)?];
    let spec = SweepSpec { depths: vec![4, 12, 24], ..SweepSpec::desk(24, points) };
    let result = run_depth_sweep(&spec, &data)?;
    println!("depth  sigma_w^2  accuracy");
    for c in &result.aggregates {
        println!("{:>5}  {:>9}  {:.4} ± {:.4}", c.depth, c.point.sigma_w2, c.mean_accuracy, c.std_accuracy);
    }
    Ok(())
}
