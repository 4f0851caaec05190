#![allow(dead_code)]

pub mod fd;

use std::collections::HashMap;
use std::sync::OnceLock;

use bitta::harness::{pretrain, ExperimentConfig, PretrainConfig};
use bitta::nn::Mlp;
use bitta::streams::dump::{read_dump, write_dump};
use bitta::streams::{make_shift_stream, Corruption, CorruptionKind, StreamSpec};

/// Four short segments of small batches: enough adaptation to matter, fast in debug builds.
pub fn small_config() -> ExperimentConfig {
    let stream = StreamSpec {
        segments: vec![
            Corruption {
                kind: CorruptionKind::GaussianNoise,
                severity: 2.0,
            },
            Corruption {
                kind: CorruptionKind::Rotation,
                severity: 0.9,
            },
            Corruption {
                kind: CorruptionKind::Scaling,
                severity: 3.0,
            },
            Corruption {
                kind: CorruptionKind::MeanShift,
                severity: 2.0,
            },
        ],
        batch_size: 32,
        batches_per_segment: 3,
        ..StreamSpec::desk_benchmark()
    };
    ExperimentConfig {
        stream,
        seeds: vec![0, 1],
        pretrain: PretrainConfig {
            n_train: 3000,
            n_holdout: 1000,
            epochs: 8,
            ..PretrainConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

/// Source model for [`small_config`], trained once per test binary.
pub fn small_model() -> &'static Mlp {
    static MODEL: OnceLock<Mlp> = OnceLock::new();
    MODEL.get_or_init(|| {
        let cfg = small_config();
        pretrain(&cfg.stream, &cfg.pretrain).expect("small pretraining converges").0
    })
}

/// Ground-truth labels by wire sample id, read back from a stream dump.
pub fn truth_by_id(spec: &StreamSpec, seed: u64) -> HashMap<String, usize> {
    let stream = make_shift_stream(spec, seed).unwrap();
    let mut buf = Vec::new();
    write_dump(&mut buf, spec, seed, &stream).unwrap();
    let (_, records) = read_dump(&buf[..]).unwrap();
    records
        .into_iter()
        .flat_map(|r| r.ids.into_iter().zip(r.labels))
        .collect()
}

use bitta::engine::{adapt_stream, Adapter, TermMask};
use bitta::harness::{run_experiment, run_seed, run_seed_with, Method, SeedRun};
use bitta::streams::{OracleSpec, SimulatedOracle};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

fn with_method(cfg: &ExperimentConfig, method: Method) -> ExperimentConfig {
    ExperimentConfig {
        method,
        ..cfg.clone()
    }
}

fn same_run(a: &SeedRun, b: &SeedRun, what: &str) -> Check {
    if a.final_model != b.final_model {
        return Err(format!("{what}: final parameters differ"));
    }
    let acc = |r: &SeedRun| r.rows.iter().map(|x| (x.n_correct, x.cumulative_acc)).collect::<Vec<_>>();
    if acc(a) != acc(b) {
        return Err(format!("{what}: arrival accuracies differ"));
    }
    Ok(format!("{what}: {} batches bit-identical", a.rows.len()))
}

/// Final model of BiTTA restricted to some loss terms, through the engine directly.
fn masked_engine(model: &Mlp, cfg: &ExperimentConfig, seed: u64, terms: TermMask) -> Mlp {
    let stream = make_shift_stream(&cfg.stream, seed).unwrap();
    let mut oracle = SimulatedOracle::new(OracleSpec::new(cfg.error_rate, seed).unwrap(), &stream).unwrap();
    let bitta = with_method(cfg, Method::BiTTA);
    let mut a = Adapter::new(model.clone(), bitta.adapt_for(seed))
        .unwrap()
        .with_terms(terms);
    adapt_stream(&mut a, stream.iter().map(|b| b.view()), &mut oracle).unwrap();
    a.into_model()
}

/// k = 0, alpha = 0, beta = 0 must reproduce BN-statistics adaptation exactly.
pub fn reduction_to_bnstats(model: &Mlp, cfg: &ExperimentConfig, seed: u64) -> Check {
    let mut zero = with_method(cfg, Method::BiTTA);
    zero.adapt.k = 0;
    zero.adapt.alpha = 0.0;
    zero.adapt.beta = 0.0;
    let a = run_seed(model, &zero, seed).map_err(|e| e.to_string())?;
    let b = run_seed(model, &with_method(cfg, Method::BnStats), seed).map_err(|e| e.to_string())?;
    same_run(&a, &b, "k=0,alpha=0,beta=0 vs bn-stats")
}

/// beta = 0 equals an engine with the agreement term removed.
pub fn reduction_to_bfa(model: &Mlp, cfg: &ExperimentConfig, seed: u64) -> Check {
    let a = run_seed(model, &with_method(cfg, Method::BfaOnly), seed).map_err(|e| e.to_string())?;
    let b = masked_engine(
        model,
        cfg,
        seed,
        TermMask {
            feedback: true,
            agreement: false,
        },
    );
    if a.final_model != b {
        return Err("beta=0 vs feedback-only engine: parameters differ".into());
    }
    Ok("beta=0 vs feedback-only engine: bit-identical".into())
}

/// alpha = 0, k = 0 equals an engine with the feedback terms removed.
pub fn reduction_to_aba(model: &Mlp, cfg: &ExperimentConfig, seed: u64) -> Check {
    let a = run_seed(model, &with_method(cfg, Method::AbaOnly), seed).map_err(|e| e.to_string())?;
    let b = masked_engine(
        model,
        cfg,
        seed,
        TermMask {
            feedback: false,
            agreement: true,
        },
    );
    if a.final_model != b {
        return Err("alpha=0,k=0 vs agreement-only engine: parameters differ".into());
    }
    Ok("alpha=0,k=0 vs agreement-only engine: bit-identical".into())
}

/// Scrambling the hidden labels while the oracle keeps its answers changes nothing
/// the adaptation path can see.
pub fn label_firewall(model: &Mlp, cfg: &ExperimentConfig, seed: u64) -> Check {
    let stream = make_shift_stream(&cfg.stream, seed).unwrap();
    let spec = OracleSpec::new(cfg.error_rate, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let poisoned: Vec<_> = stream
        .iter()
        .map(|b| {
            let mut labels: Vec<usize> = (0..b.len()).map(|i| i % cfg.stream.n_classes).collect();
            labels.shuffle(&mut rng);
            b.relabeled(labels)
        })
        .collect();
    let mut methods = 0;
    for method in [Method::BiTTA, Method::EntropyMinBinary] {
        let c = with_method(cfg, method);
        let mut oracle = SimulatedOracle::new(spec, &stream).unwrap();
        let clean = run_seed_with(model, &c, seed, &stream, &mut oracle).map_err(|e| e.to_string())?;
        let mut oracle = SimulatedOracle::new(spec, &stream).unwrap();
        let dirty = run_seed_with(model, &c, seed, &poisoned, &mut oracle).map_err(|e| e.to_string())?;
        if clean.final_model != dirty.final_model {
            return Err(format!("{method}: poisoned labels changed the parameters"));
        }
        let preds = |r: &SeedRun| r.rows.iter().map(|x| x.n_bfa).collect::<Vec<_>>();
        if preds(&clean) != preds(&dirty) {
            return Err(format!("{method}: poisoned labels changed the query counts"));
        }
        methods += 1;
    }
    Ok(format!("poisoned labels: {methods} methods bit-identical"))
}

/// Two full runs into the same directory write identical files.
pub fn run_directories_identical(model: &Mlp, cfg: &ExperimentConfig) -> Check {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        output_dir: Some(dir.path().to_path_buf()),
        ..cfg.clone()
    };
    let files = ["metrics.csv", "summary.json", "config.toml"];
    let mut contents = Vec::new();
    for _ in 0..2 {
        run_experiment(model, &c).map_err(|e| e.to_string())?;
        let bytes: Vec<Vec<u8>> = files
            .iter()
            .map(|f| std::fs::read(dir.path().join(f)).unwrap())
            .collect();
        contents.push(bytes);
    }
    for (i, f) in files.iter().enumerate() {
        if contents[0][i] != contents[1][i] {
            return Err(format!("{f} differs between runs"));
        }
    }
    Ok("metrics.csv, summary.json, config.toml byte-identical".into())
}
