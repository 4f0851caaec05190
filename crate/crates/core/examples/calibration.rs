//! Expected calibration error of the MC-dropout policy against the plain softmax, per
//! shift segment, for the unadapted source model.

use bitta::harness::{pretrain, segment_calibration, ExperimentConfig};
use bitta::streams::make_shift_stream;

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig::default();
    let (model, _) = pretrain(&cfg.stream, &cfg.pretrain)?;
    let stream = make_shift_stream(&cfg.stream, 0)?;
    println!("seg  corruption      acc    ece(softmax)  ece(mc)");
    for c in segment_calibration(&model, &stream, cfg.adapt.n_passes, 0, cfg.ece_bins)? {
        let shift = &cfg.stream.segments[c.segment];
        println!(
            "{:>3}  {:<14} {:.3}  {:>12.4}  {:>7.4}",
            c.segment,
            shift.kind.name(),
            c.accuracy_det,
            c.ece_det,
            c.ece_mc
        );
    }
    Ok(())
}
