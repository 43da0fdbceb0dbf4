//! Coarse text rendering of the ordered/chaotic phase diagram.

use edge_atlas::phase::phase_grid;
use edge_atlas::Activation;

fn main() -> edge_atlas::Result<()> {
    let grid = phase_grid((0.5, 4.0), (0.0, 0.5), (36, 11), &Activation::tanh())?;
    println!("'#' chaotic (chi > 1), '.' ordered; sigma_b^2 increases upward");
    for j in (0..grid.b_axis.len()).rev() {
        let row: String = (0..grid.w_axis.len())
            .map(|i| match grid.chi_at(i, j) {
                Some(c) if c > 1.0 => '#',
                Some(_) => '.',
                None => '?',
            })
            .collect();
        println!("{:>5.2} {row}", grid.b_axis[j]);
    }
    println!("      sigma_w^2 from {} to {}", grid.w_axis[0], grid.w_axis.last().unwrap());
    Ok(())
}
