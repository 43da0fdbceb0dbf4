//! Trace the tanh edge of chaos and its crossing with the line of uniformity.

use edge_atlas::phase::{eoc_curve, lou_eoc_intersection};
use edge_atlas::Activation;

fn main() -> edge_atlas::Result<()> {
    let tanh = Activation::tanh();
    let curve = eoc_curve(1.0, 4.0, 13, &tanh)?;
    println!(" sigma_w^2  sigma_b^2   sigma*^2");
    for c in &curve.points {
        println!("{:>9.3}  {:>9.5}  {:>9.5}", c.point.sigma_w2, c.point.sigma_b2, c.sigma_star2);
    }
    let p = lou_eoc_intersection(&tanh)?;
    println!("\nline of uniformity meets the edge of chaos at ({:.3}, {:.4})", p.sigma_w2, p.sigma_b2);
    Ok(())
}
