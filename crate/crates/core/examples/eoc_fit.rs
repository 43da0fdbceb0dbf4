//! Constrained polynomial fit of the edge of chaos over [1, 10].

use edge_atlas::fitting::fit_eoc_polynomial;
use edge_atlas::phase::eoc_curve;
use edge_atlas::Activation;

fn main() -> edge_atlas::Result<()> {
    let curve = eoc_curve(1.0, 10.0, 91, &Activation::tanh())?;
    let fit = fit_eoc_polynomial(&curve.phase_points(), 9)?;
    println!("sigma_b^2 = sum_n c_n (sigma_w^2 - 1)^n / n!, rms residual {:.2e}", fit.rms_residual);
    for n in 2..=fit.degree() {
        println!("  c{n} = {:>10.5}", fit.coefficient(n).unwrap());
    }
    println!("value and slope at sigma_w^2 = 1: {} {}", fit.eval(1.0), fit.slope(1.0));
    Ok(())
}
