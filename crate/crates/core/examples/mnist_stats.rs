//! Pooled pixel statistics of MNIST and the saturation thresholds they imply.
//!
//! Reads the IDX files from the directory given as the first argument or
//! `$EDGE_ATLAS_DATA`.

use edge_atlas::datasets::{compute_stats, load_split, resolve_data_dir, Split};
use edge_atlas::fitting::analytic_threshold;

fn main() -> edge_atlas::Result<()> {
    let arg = std::env::args_os().nth(1).map(std::path::PathBuf::from);
    let dir = resolve_data_dir(arg.as_deref())?;
    let train = load_split(&dir, Split::Train)?;
    let stats = compute_stats(&train)?;
    println!("{} images, sigma0^2 = {:.5}, mu0^2 = {:.5}", train.len(), stats.input_variance, stats.input_mean_sq);
    println!("class counts {:?}", train.class_counts());
    for b in [0.0, 0.25, 0.5, 0.75] {
        let one = analytic_threshold(1, b, &stats)?;
        let two = analytic_threshold(2, b, &stats)?;
        println!("sigma_b^2 = {b:<4}: threshold {one:.3} (L=1), {two:.3} (L=2)");
    }
    Ok(())
}
