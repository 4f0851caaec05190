//! Drive the adapter by hand over a continual shift stream with the simulated annotator,
//! printing accuracy as segments change.

use bitta::engine::Adapter;
use bitta::harness::{pretrain, ExperimentConfig};
use bitta::streams::{make_shift_stream, SimulatedOracle};

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig::default();
    let seed = 0;
    let (model, _) = pretrain(&cfg.stream, &cfg.pretrain)?;
    let stream = make_shift_stream(&cfg.stream, seed)?;
    let mut oracle = SimulatedOracle::new(cfg.oracle_for(seed), &stream)?;
    let mut adapter = Adapter::new(model, cfg.adapt_for(seed))?;

    let (mut hits, mut seen) = (0, 0);
    let (mut seg_hits, mut seg_seen) = (0, 0);
    for (i, batch) in stream.iter().enumerate() {
        let report = adapter.adapt_batch(batch.view(), &mut oracle)?;
        let ok = batch.labels().score(report.arrival_pred()).iter().filter(|&&c| c).count();
        hits += ok;
        seen += batch.len();
        seg_hits += ok;
        seg_seen += batch.len();
        let last = stream.get(i + 1).is_none_or(|n| n.segment != batch.segment);
        if last {
            let c = &cfg.stream.segments[batch.segment];
            println!(
                "segment {:>2} {:<14} severity {:.1}  accuracy {:.3}  cumulative {:.3}  memory {}+{}",
                batch.segment,
                c.kind.name(),
                c.severity,
                seg_hits as f64 / seg_seen as f64,
                hits as f64 / seen as f64,
                adapter.memories().correct.len(),
                adapter.memories().incorrect.len(),
            );
            (seg_hits, seg_seen) = (0, 0);
        }
    }
    Ok(())
}
