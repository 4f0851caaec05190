//! Train the source classifier on clean data and save a checkpoint.
//!
//! cargo run --release --example pretrain_source -- /tmp/source.json

use bitta::harness::{pretrain, ExperimentConfig};
use bitta::nn::checkpoint;

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig::default();
    let (model, report) = pretrain(&cfg.stream, &cfg.pretrain)?;
    for (e, loss) in report.epoch_loss.iter().enumerate() {
        println!("epoch {e:>2}  loss {loss:.4}");
    }
    println!(
        "train {:.4}  holdout {:.4}  ({} parameters)",
        report.train_accuracy,
        report.holdout_accuracy,
        model.param_count()
    );
    if let Some(path) = std::env::args().nth(1) {
        checkpoint::save(&model, path.as_ref())?;
        println!("saved {path}");
    }
    Ok(())
}
