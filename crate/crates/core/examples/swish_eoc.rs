//! The SWISH edge of chaos only exists over a bounded range of weight variance.

use edge_atlas::phase::eoc_curve;
use edge_atlas::Activation;

fn main() -> edge_atlas::Result<()> {
    let curve = eoc_curve(1.5, 4.5, 31, &Activation::swish())?;
    match curve.computable_range() {
        Some((lo, hi)) => println!("critical points found for sigma_w^2 in [{lo:.3}, {hi:.3}]"),
        None => println!("no critical points found"),
    }
    for c in &curve.points {
        println!("  ({:.3}, {:.5})  sigma*^2 = {:.4}", c.point.sigma_w2, c.point.sigma_b2, c.sigma_star2);
    }
    for g in curve.gaps.iter().take(3) {
        println!("  gap at {:.3}: {}", g.sigma_w2, g.reason);
    }
    Ok(())
}
