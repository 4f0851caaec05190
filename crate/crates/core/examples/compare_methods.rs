//! Every method on the default benchmark, one seed each.
//!
//! BITTA_SEEDS=0,1,2 cargo run --release --example compare_methods

use bitta::harness::{pretrain, run_experiment, ExperimentConfig, Method};

fn main() -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.seeds = match std::env::var("BITTA_SEEDS") {
        Ok(s) => s.split(',').map(|v| v.trim().parse()).collect::<Result<_, _>>()?,
        Err(_) => vec![0],
    };
    let (model, _) = pretrain(&cfg.stream, &cfg.pretrain)?;
    println!("{:<20} {:>8} {:>8}", "method", "mean", "std");
    for method in Method::ALL {
        cfg.method = method;
        let s = run_experiment(&model, &cfg)?.summary;
        println!("{:<20} {:>8.4} {:>8.4}", method.name(), s.mean_accuracy, s.std_accuracy);
    }
    Ok(())
}
