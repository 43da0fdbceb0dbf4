//! Train a 3-layer tanh network initialised on the edge of chaos.

use edge_atlas::datasets::{load_split, resolve_data_dir, subset, Split};
use edge_atlas::network::{init_network, train, NetworkConfig, TrainConfig};
use edge_atlas::PhasePoint;

fn main() -> edge_atlas::Result<()> {
    let arg = std::env::args_os().nth(1).map(std::path::PathBuf::from);
    let dir = resolve_data_dir(arg.as_deref())?;
    let train_set = subset(&load_split(&dir, Split::Train)?, 10_000, 0)?.to_labeled();
    let test_set = subset(&load_split(&dir, Split::Test)?, 2_000, 1)?.to_labeled();

    let mut net = init_network(NetworkConfig::mnist(3, 64, PhasePoint::new(1.76, 0.05)?, 0))?;
    let record = train(&mut net, &train_set, &test_set, &TrainConfig::default())?;
    println!("before training: test accuracy {:.4}", record.initial_test_accuracy);
    for e in &record.epochs {
        println!(
            "epoch {}: loss {:.4}, train {:.4}, test {:.4} ({:.1}s)",
            e.epoch, e.train_loss, e.train_accuracy, e.test_accuracy, e.wall_seconds
        );
    }
    let vars: Vec<String> = record.final_preactivation_variances.iter().map(|v| format!("{v:.3}")).collect();
    println!("pre-activation variance per layer after training: {}", vars.join(" "));
    Ok(())
}
