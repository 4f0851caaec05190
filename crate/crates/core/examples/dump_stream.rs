//! Write a stream dump (JSON lines with labels) and read it back.

use std::io::BufReader;

use bitta::harness::ExperimentConfig;
use bitta::streams::dump::{read_dump, write_dump};
use bitta::streams::make_shift_stream;

fn main() -> anyhow::Result<()> {
    let cfg = ExperimentConfig::default();
    let stream = make_shift_stream(&cfg.stream, 3)?;
    let mut buf = Vec::new();
    write_dump(&mut buf, &cfg.stream, 3, &stream)?;
    let (header, records) = read_dump(BufReader::new(buf.as_slice()))?;
    println!(
        "{} v{}: seed {}, {} batches, {} bytes",
        header.format,
        header.version,
        header.seed,
        header.n_batches,
        buf.len()
    );
    for r in records.iter().step_by(header.spec.batches_per_segment) {
        let counts = (0..header.spec.n_classes)
            .map(|c| r.labels.iter().filter(|&&y| y == c).count())
            .collect::<Vec<_>>();
        println!("batch {:>3}  segment {:>2}  first id {}  label counts {counts:?}", r.index, r.segment, r.ids[0]);
    }
    Ok(())
}
