//! Look at one shifted batch through the MC-dropout policy: which samples would be sent to
//! the annotator, and which ones the model trusts on its own.

use bitta::harness::{pretrain, ExperimentConfig};
use bitta::policy::{agreement_set, estimate_policy, select_bfa, Selection};
use bitta::streams::make_shift_stream;

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig::default();
    let (model, _) = pretrain(&cfg.stream, &cfg.pretrain)?;
    let stream = make_shift_stream(&cfg.stream, 0)?;
    let batch = &stream[0];

    let est = estimate_policy(&model, &batch.features, cfg.adapt.n_passes, 7)?;
    let queried = select_bfa(&est, cfg.adapt.k, Selection::LeastConfidence, 7);
    let agreed = agreement_set(&est, &queried);
    let correct = batch.labels().score(&est.det_pred);

    println!("batch 0 ({} samples, {} passes)", batch.len(), est.n_passes);
    println!("  idx  det  mc  confidence  correct  role");
    for i in 0..batch.len() {
        let role = if queried.contains(&i) {
            "query"
        } else if agreed.contains(&i) {
            "agree"
        } else {
            "-"
        };
        println!(
            "  {i:>3}  {:>3}  {:>2}  {:>10.3}  {:>7}  {role}",
            est.det_pred[i], est.mc_pred[i], est.confidence[i], correct[i]
        );
    }
    let hit = |idx: &[usize]| idx.iter().filter(|&&i| correct[i]).count() as f64 / idx.len().max(1) as f64;
    println!("accuracy on queried samples {:.3}, on agreeing samples {:.3}", hit(&queried), hit(&agreed));
    Ok(())
}
