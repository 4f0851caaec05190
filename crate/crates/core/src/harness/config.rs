use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BaselineKind};
use crate::engine::{AdaptConfig, FeedbackSchedule};
use crate::error::{Error, Result};
use crate::streams::{OracleSpec, StreamSpec};

/// Environment variable naming the root directory for run outputs.
pub const OUT_ENV: &str = "BITTA_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[serde(rename = "bitta")]
    BiTTA,
    /// BiTTA with the agreement term switched off.
    BfaOnly,
    /// BiTTA with no queries and no feedback terms.
    AbaOnly,
    SrcValid,
    BnStats,
    EntropyMinBinary,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::BiTTA,
        Method::BfaOnly,
        Method::AbaOnly,
        Method::SrcValid,
        Method::BnStats,
        Method::EntropyMinBinary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::BiTTA => "bitta",
            Method::BfaOnly => "bfa-only",
            Method::AbaOnly => "aba-only",
            Method::SrcValid => "src-valid",
            Method::BnStats => "bn-stats",
            Method::EntropyMinBinary => "entropy-min-binary",
        }
    }

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            Method::SrcValid => Some(BaselineKind::SrcValid),
            Method::BnStats => Some(BaselineKind::BnStats),
            Method::EntropyMinBinary => Some(BaselineKind::EntropyMinBinary),
            _ => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Source-model training recipe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub hidden: Vec<usize>,
    pub n_train: usize,
    pub n_holdout: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate is multiplied by this after every epoch.
    pub lr_decay: f64,
    pub dropout_rate: f64,
    pub seed: u64,
    /// Clean holdout accuracy below this fails the run.
    pub min_accuracy: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            n_train: 12_000,
            n_holdout: 4_000,
            epochs: 30,
            batch_size: 64,
            lr: 0.1,
            lr_decay: 0.93,
            dropout_rate: 0.3,
            seed: 7,
            min_accuracy: 0.90,
        }
    }
}

/// One experiment: a method run over several seeds of the same stream definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub stream: StreamSpec,
    pub adapt: AdaptConfig,
    /// Annotator error rate; the flip seed is the run seed.
    pub error_rate: f64,
    pub schedule: FeedbackSchedule,
    pub pretrain: PretrainConfig,
    /// Pretrained model to load; when absent the model is trained from `pretrain`.
    pub checkpoint: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Bins for the calibration summary.
    pub ece_bins: usize,
    /// Live sessions: how long a human has to answer a batch before the simulated annotator does.
    pub deadline_ms: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::BiTTA,
            seeds: vec![0, 1, 2],
            stream: StreamSpec::desk_benchmark(),
            adapt: AdaptConfig::default(),
            error_rate: 0.0,
            schedule: FeedbackSchedule::default(),
            pretrain: PretrainConfig::default(),
            checkpoint: None,
            output_dir: None,
            ece_bins: 15,
            deadline_ms: 30_000,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.ece_bins == 0 {
            return Err(Error::Config("ece_bins must be positive".into()));
        }
        self.stream.validate()?;
        self.adapt.validate()?;
        self.schedule.validate()?;
        OracleSpec::new(self.error_rate, 0)?;
        Ok(())
    }

    /// Adaptation settings after applying the method preset, for run seed `seed`.
    pub fn adapt_for(&self, seed: u64) -> AdaptConfig {
        let base = AdaptConfig {
            seed,
            ..self.adapt.clone()
        };
        match self.method {
            Method::BfaOnly => base.bfa_only(),
            Method::AbaOnly => base.aba_only(),
            _ => base,
        }
    }

    pub fn baseline_for(&self, seed: u64) -> BaselineConfig {
        BaselineConfig {
            k: self.adapt.k,
            lr: self.adapt.lr,
            bn_momentum: self.adapt.bn_momentum,
            clip_eps: self.adapt.clip_eps,
            seed,
        }
    }

    pub fn oracle_for(&self, seed: u64) -> OracleSpec {
        OracleSpec {
            error_rate: self.error_rate,
            seed,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Output root: `BITTA_OUT` if set, else `runs` under the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}
