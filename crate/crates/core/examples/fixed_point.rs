//! Variance fixed point and depth scales at a few phase points.

use edge_atlas::phase::{variance_trajectory, FixedPointSolver};
use edge_atlas::{Activation, PhasePoint};

fn main() -> edge_atlas::Result<()> {
    let tanh = Activation::tanh();
    for (w, b) in [(1.76, 0.05), (1.0, 0.0), (0.8, 0.2), (4.0, 0.05)] {
        let s = FixedPointSolver::default().solve(PhasePoint::new(w, b)?, &tanh)?;
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "({w}, {b}): sigma*^2 = {:.5}  chi = {:.4}  xi = {}  xi_tilde = {}",
            s.sigma_star2,
            s.chi,
            fmt(s.xi),
            fmt(s.xi_tilde)
        );
    }

    let p = PhasePoint::new(1.76, 0.05)?;
    println!("\nlayer   from 0.1   from 3.0");
    let lo = variance_trajectory(0.1, 12, p, &tanh);
    let hi = variance_trajectory(3.0, 12, p, &tanh);
    for (l, (a, b)) in lo.iter().zip(&hi).enumerate() {
        println!("{:>5}  {a:>9.5}  {b:>9.5}", l + 1);
    }
    Ok(())
}
