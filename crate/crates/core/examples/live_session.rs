//! A live feedback session with a scripted in-process annotator. The annotator answers
//! truthfully but only for every other batch; the rest time out and fall back to the
//! simulated annotator.
//!
//! `bitta serve` exposes the same session over TCP, one JSON message per line.

use std::collections::HashMap;
use std::thread;

use bitta::harness::session::protocol::{ClientMessage, ServerMessage};
use bitta::harness::{memory_pair, pretrain, ExperimentConfig, Session};
use bitta::streams::dump::{read_dump, write_dump};
use bitta::streams::make_shift_stream;

fn main() -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.stream.batches_per_segment = 2;
    cfg.deadline_ms = 200;
    let (model, _) = pretrain(&cfg.stream, &cfg.pretrain)?;

    // The scripted annotator reads the ground truth from a stream dump; a person would look
    // at the rendering instead.
    let mut dump = Vec::new();
    write_dump(&mut dump, &cfg.stream, 0, &make_shift_stream(&cfg.stream, 0)?)?;
    let (_, records) = read_dump(dump.as_slice())?;
    let truth: HashMap<String, usize> = records
        .into_iter()
        .flat_map(|r| r.ids.into_iter().zip(r.labels))
        .collect();

    let mut session = Session::new(&model, &cfg, 0)?;
    let (mut transport, client) = memory_pair();
    let annotator = thread::spawn(move || {
        while let Some(msg) = client.recv() {
            match msg {
                ServerMessage::SessionHello { spec, class_names, .. } => {
                    println!("hello: {} batches, classes {:?}", spec.n_batches, class_names)
                }
                ServerMessage::QueryBatch { batch_index, queries, .. } if batch_index % 2 == 0 => {
                    for q in queries {
                        let correct = truth[&q.sample_id] == q.predicted_label;
                        client.send(&ClientMessage::Feedback { sample_id: q.sample_id, correct }).unwrap();
                    }
                }
                ServerMessage::BatchResult { batch_index, post_acc, cumulative_acc, fallback_answers, .. } => println!(
                    "batch {batch_index:>2}  post {post_acc:.3}  cumulative {cumulative_acc:.3}  fallback {fallback_answers}"
                ),
                ServerMessage::SessionEnd { cumulative_acc, fallback_answers, .. } => {
                    println!("done: cumulative {cumulative_acc:.4}, {fallback_answers} answers from the fallback");
                    break;
                }
                _ => {}
            }
        }
    });
    session.run(&mut transport)?;
    drop(transport);
    annotator.join().unwrap();
    Ok(())
}
