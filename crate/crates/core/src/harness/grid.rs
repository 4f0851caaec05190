use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{run_experiment, RunSummary};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::policy::Selection;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridAxis {
    K,
    ErrorRate,
    Beta,
    NPasses,
    Selection,
}

impl FromStr for GridAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "k" => GridAxis::K,
            "error-rate" | "error_rate" => GridAxis::ErrorRate,
            "beta" => GridAxis::Beta,
            "n-passes" | "n_passes" => GridAxis::NPasses,
            "selection" => GridAxis::Selection,
            _ => return Err(Error::Config(format!("unknown grid axis {s:?}"))),
        })
    }
}

/// One value along an ablation axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "value", rename_all = "kebab-case")]
pub enum GridCell {
    K(usize),
    ErrorRate(f64),
    Beta(f64),
    NPasses(usize),
    Selection(Selection),
}

impl GridCell {
    pub fn parse(axis: GridAxis, value: &str) -> Result<Self> {
        let bad = |_| Error::Config(format!("bad value {value:?} for axis {axis:?}"));
        let v = value.trim();
        Ok(match axis {
            GridAxis::K => GridCell::K(v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?),
            GridAxis::NPasses => {
                GridCell::NPasses(v.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?)
            }
            GridAxis::ErrorRate => {
                GridCell::ErrorRate(v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?)
            }
            GridAxis::Beta => GridCell::Beta(v.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?),
            GridAxis::Selection => GridCell::Selection(match v {
                "least-confidence" => Selection::LeastConfidence,
                "random" => Selection::Random,
                _ => return Err(bad(String::new())),
            }),
        })
    }

    /// Parse a comma-separated value list.
    pub fn parse_list(axis: GridAxis, values: &str) -> Result<Vec<Self>> {
        values.split(',').map(|v| Self::parse(axis, v)).collect()
    }

    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        match *self {
            GridCell::K(k) => cfg.adapt.k = k,
            GridCell::ErrorRate(e) => cfg.error_rate = e,
            GridCell::Beta(b) => cfg.adapt.beta = b,
            GridCell::NPasses(n) => cfg.adapt.n_passes = n,
            GridCell::Selection(s) => cfg.adapt.selection = s,
        }
        cfg
    }

    pub fn label(&self) -> String {
        match self {
            GridCell::K(k) => format!("k={k}"),
            GridCell::ErrorRate(e) => format!("error-rate={e}"),
            GridCell::Beta(b) => format!("beta={b}"),
            GridCell::NPasses(n) => format!("n-passes={n}"),
            GridCell::Selection(s) => format!(
                "selection={}",
                match s {
                    Selection::LeastConfidence => "least-confidence",
                    Selection::Random => "random",
                }
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cell: GridCell,
    pub summary: Result<RunSummary, String>,
}

/// Run `base` once per cell, in parallel. Cells share seeds; each writes into its own
/// subdirectory of `base.output_dir` when one is set. A failing cell keeps its error.
pub fn ablation_grid(model: &Mlp, base: &ExperimentConfig, cells: &[GridCell]) -> Result<Vec<GridResult>> {
    let configs = cells
        .iter()
        .map(|c| {
            let mut cfg = c.apply(base);
            cfg.output_dir = base.output_dir.as_ref().map(|d| d.join(c.label()));
            cfg.validate().map(|_| (*c, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(configs
        .par_iter()
        .map(|(cell, cfg)| GridResult {
            cell: *cell,
            summary: run_experiment(model, cfg)
                .map(|o| o.summary)
                .map_err(|e| e.to_string()),
        })
        .collect())
}
