use std::fs;
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bitta::harness::{
    ablation_grid, load_or_pretrain, output_root, pretrain, run_experiment, serve, write_csv_file, ExperimentConfig,
    GridAxis, GridCell, Method, ServeOutcome, Session, SessionSnapshot,
};
use bitta::nn::checkpoint;
use bitta::policy::Selection;
use bitta::streams::dump::write_dump;
use bitta::streams::{make_shift_stream, Ordering};

/// Test-time adaptation from binary feedback: pretraining, benchmark runs, ablations and
/// live annotation sessions.
#[derive(Parser)]
#[command(name = "bitta", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Train the source model and save a checkpoint.
    Pretrain {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Checkpoint path [default: $BITTA_OUT/source.json].
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Run one method over every seed and write metrics.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the configured method once per value of an ablation axis.
    Grid {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// k, error-rate, beta, n-passes or selection.
        #[arg(long)]
        axis: GridAxis,
        /// Comma-separated values along the axis.
        #[arg(long)]
        values: String,
    },
    /// Serve a live feedback session over TCP (one JSON message per line).
    Serve {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        /// Resume from a session snapshot instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many client connections.
        #[arg(long)]
        max_connections: Option<usize>,
    },
    /// Write the generated stream (with labels) for one seed.
    DumpStream {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output file, `-` for stdout.
        #[arg(long, default_value = "-")]
        to: PathBuf,
    },
}

/// Experiment settings. Flags override the TOML file, which overrides the defaults.
#[derive(Args, Clone, Debug, Default)]
struct ConfigArgs {
    /// TOML file with an experiment config.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    n_passes: Option<usize>,
    #[arg(long)]
    dropout_rate: Option<f64>,
    #[arg(long)]
    bn_momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// least-confidence or random.
    #[arg(long, value_parser = parse_selection)]
    selection: Option<Selection>,
    #[arg(long)]
    memory_capacity: Option<usize>,
    #[arg(long)]
    error_rate: Option<f64>,
    /// Query only every n-th batch.
    #[arg(long)]
    skip_period: Option<usize>,
    /// Deliver answers this many batches late.
    #[arg(long)]
    delay: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    batches_per_segment: Option<usize>,
    /// continual, mixed, single-sample or non-iid:<correlation>.
    #[arg(long, value_parser = parse_ordering)]
    ordering: Option<Ordering>,
    #[arg(long)]
    geometry_seed: Option<u64>,
    #[arg(long)]
    pretrain_seed: Option<u64>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    /// Load this model instead of pretraining.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory [default: a directory under $BITTA_OUT].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    ece_bins: Option<usize>,
    /// Live sessions: milliseconds before unanswered queries fall back to the simulated annotator.
    #[arg(long)]
    deadline_ms: Option<u64>,
}

fn parse_selection(s: &str) -> Result<Selection, String> {
    match s {
        "least-confidence" => Ok(Selection::LeastConfidence),
        "random" => Ok(Selection::Random),
        _ => Err(format!("unknown selection {s:?}")),
    }
}

fn parse_ordering(s: &str) -> Result<Ordering, String> {
    match s {
        "continual" => Ok(Ordering::Continual),
        "mixed" => Ok(Ordering::Mixed),
        "single-sample" => Ok(Ordering::SingleSample),
        _ => match s.strip_prefix("non-iid:") {
            Some(c) => c
                .parse()
                .map(|correlation| Ordering::NonIid { correlation })
                .map_err(|e| format!("bad correlation: {e}")),
            None => Err(format!("unknown ordering {s:?}")),
        },
    }
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { c.$($field).+ = v; })*
            };
        }
        set!(
            method => method,
            seeds => seeds,
            k => adapt.k,
            epochs => adapt.epochs,
            lr => adapt.lr,
            alpha => adapt.alpha,
            beta => adapt.beta,
            n_passes => adapt.n_passes,
            dropout_rate => adapt.dropout_rate,
            bn_momentum => adapt.bn_momentum,
            weight_decay => adapt.weight_decay,
            selection => adapt.selection,
            memory_capacity => adapt.memory_capacity,
            error_rate => error_rate,
            skip_period => schedule.skip_period,
            delay => schedule.delay,
            batch_size => stream.batch_size,
            batches_per_segment => stream.batches_per_segment,
            ordering => stream.ordering,
            geometry_seed => stream.geometry_seed,
            pretrain_seed => pretrain.seed,
            pretrain_epochs => pretrain.epochs,
            ece_bins => ece_bins,
            deadline_ms => deadline_ms,
        );
        if let Some(p) = &self.checkpoint {
            c.checkpoint = Some(p.clone());
        }
        if let Some(p) = &self.out {
            c.output_dir = Some(p.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

fn default_dir(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output_dir.clone().unwrap_or_else(|| output_root().join(name))
}

fn model_for(cfg: &ExperimentConfig) -> Result<bitta::nn::Mlp> {
    if cfg.checkpoint.is_none() {
        eprintln!("no checkpoint given; pretraining the source model");
    }
    Ok(load_or_pretrain(cfg)?)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().verb {
        Verb::Pretrain { cfg, save } => {
            let cfg = cfg.resolve()?;
            let (model, report) = pretrain(&cfg.stream, &cfg.pretrain)?;
            let path = save.unwrap_or_else(|| default_dir(&cfg, "source.json"));
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            checkpoint::save(&model, &path)?;
            println!(
                "holdout accuracy {:.4}, train accuracy {:.4}; saved {}",
                report.holdout_accuracy,
                report.train_accuracy,
                path.display()
            );
        }
        Verb::Run { cfg } => {
            let mut cfg = cfg.resolve()?;
            cfg.output_dir = Some(default_dir(&cfg, &format!("run-{}", cfg.method)));
            let model = model_for(&cfg)?;
            let out = run_experiment(&model, &cfg)?;
            let s = &out.summary;
            for seed in &s.seeds {
                match (&seed.error, seed.final_accuracy) {
                    (Some(e), _) => println!("seed {:>3}  failed: {e}", seed.seed),
                    (None, Some(a)) => println!("seed {:>3}  {:.4}", seed.seed, a),
                    (None, None) => {}
                }
            }
            println!(
                "{}  {:.4} ± {:.4}  ({})",
                s.method,
                s.mean_accuracy,
                s.std_accuracy,
                out.directory.as_deref().map_or("-".into(), |d| d.display().to_string())
            );
        }
        Verb::Grid { cfg, axis, values } => {
            let mut cfg = cfg.resolve()?;
            let cells = GridCell::parse_list(axis, &values)?;
            let dir = default_dir(&cfg, &format!("grid-{}-{values}", cfg.method));
            cfg.output_dir = Some(dir.clone());
            let model = model_for(&cfg)?;
            let results = ablation_grid(&model, &cfg, &cells)?;
            for r in &results {
                match &r.summary {
                    Ok(s) => println!("{:<28} {:.4} ± {:.4}", r.cell.label(), s.mean_accuracy, s.std_accuracy),
                    Err(e) => println!("{:<28} failed: {e}", r.cell.label()),
                }
            }
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("grid.json"), serde_json::to_string_pretty(&results)?)?;
        }
        Verb::Serve {
            cfg,
            bind,
            resume,
            max_connections,
        } => {
            let cfg = cfg.resolve()?;
            let mut session = match &resume {
                Some(path) => {
                    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    let snapshot: SessionSnapshot = serde_json::from_str(&text)?;
                    Session::restore(snapshot)?
                }
                None => Session::new(&model_for(&cfg)?, &cfg, cfg.seeds[0])?,
            };
            let listener = TcpListener::bind(&bind).with_context(|| format!("binding {bind}"))?;
            println!("listening on {}", listener.local_addr()?);
            let outcome = serve(&listener, &mut session, max_connections)?;
            let dir = default_dir(&cfg, "session");
            fs::create_dir_all(&dir)?;
            write_csv_file(&dir.join("metrics.csv"), session.rows())?;
            save_json(&dir.join("snapshot.json"), &session.snapshot())?;
            match outcome {
                ServeOutcome::Finished => println!(
                    "session finished: {} batches, {} fallback answers; wrote {}",
                    session.rows().len(),
                    session.fallback_answers(),
                    dir.display()
                ),
                ServeOutcome::ConnectionsExhausted { next_batch } => {
                    println!("stopped at batch {next_batch}; resume with --resume {}", dir.join("snapshot.json").display())
                }
            }
        }
        Verb::DumpStream { cfg, to } => {
            let cfg = cfg.resolve()?;
            if cfg.seeds.len() != 1 {
                bail!("dump-stream takes exactly one seed (got {:?})", cfg.seeds);
            }
            let seed = cfg.seeds[0];
            let stream = make_shift_stream(&cfg.stream, seed)?;
            if to.as_os_str() == "-" {
                write_dump(BufWriter::new(io::stdout().lock()), &cfg.stream, seed, &stream)?;
            } else {
                let mut f = BufWriter::new(fs::File::create(&to).with_context(|| format!("creating {}", to.display()))?);
                write_dump(&mut f, &cfg.stream, seed, &stream)?;
                f.flush()?;
            }
        }
    }
    Ok(())
}

fn save_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}
