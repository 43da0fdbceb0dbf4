//! Post-activation distributions in a random width-256 tanh network forget
//! the input scale within a handful of layers.

use edge_atlas::experiments::{run_post_evolution, PostEvolutionConfig};

fn main() -> edge_atlas::Result<()> {
    let r = run_post_evolution(&PostEvolutionConfig::default())?;
    println!("layer  max pairwise KS   empirical pre-activation variance per start");
    for l in [1, 2, 3, 5, 10, 20, 30] {
        let ks = r.ks_at(l).map_or(f64::NAN, |k| k.max);
        let vars: Vec<String> =
            r.runs.iter().map(|run| format!("{:.3}", run.layers[l - 1].preactivation_variance)).collect();
        println!("{l:>5}  {ks:>15.4}   {}", vars.join("  "));
    }
    println!("mean-field fixed point: {:.4}", r.predicted_variances.iter().filter_map(|v| v.last()).fold(f64::NAN, |_, &x| x));
    Ok(())
}
