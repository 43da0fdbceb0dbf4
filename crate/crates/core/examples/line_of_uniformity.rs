//! Where the asymptotic post-activation distribution is closest to uniform.

use edge_atlas::gaussian::{relative_entropy_uniform, GaussianSpec, SIGMA2_MIN};
use edge_atlas::phase::{line_of_uniformity, linspace, sigma_phi_min2};

fn main() -> edge_atlas::Result<()> {
    println!("sigma*^2 minimising the relative entropy: pi^2/12 = {SIGMA2_MIN:.6}");
    println!("post-activation variance there: {:.5}", sigma_phi_min2());

    println!("\n sigma*^2   D(p || uniform)");
    for s2 in [0.2, 0.5, SIGMA2_MIN, 1.2, 2.0, 5.0] {
        println!("{s2:>9.4}   {:.6}", relative_entropy_uniform(GaussianSpec::new(s2)?)?);
    }

    println!("\n sigma_w^2  sigma_b^2 on the line");
    for w in linspace(0.0, 2.5, 6) {
        println!("{w:>9.2}  {:>9.5}", line_of_uniformity(w));
    }
    Ok(())
}
