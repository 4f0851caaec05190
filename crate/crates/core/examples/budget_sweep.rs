//! Ablation grid over the number of queried samples per batch.

use bitta::harness::{ablation_grid, pretrain, ExperimentConfig, GridAxis, GridCell};

fn main() -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.seeds = vec![0];
    let (model, _) = pretrain(&cfg.stream, &cfg.pretrain)?;
    let cells = GridCell::parse_list(GridAxis::K, "0,1,3,8")?;
    for r in ablation_grid(&model, &cfg, &cells)? {
        match r.summary {
            Ok(s) => println!("{:<10} {:.4}", r.cell.label(), s.mean_accuracy),
            Err(e) => println!("{:<10} failed: {e}", r.cell.label()),
        }
    }
    Ok(())
}
