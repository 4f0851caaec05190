//! Versioned JSON checkpoints. Floats are written in shortest round-trip form and parsed
//! exactly, so a reloaded model reproduces forward outputs bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Mlp;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "bitta-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    model: Mlp,
}

pub fn to_json(model: &Mlp) -> Result<String> {
    let env = Envelope {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    Ok(serde_json::to_string_pretty(&env)?)
}

pub fn from_json(text: &str) -> Result<Mlp> {
    let env: Envelope = serde_json::from_str(text)?;
    if env.format != CHECKPOINT_FORMAT {
        return Err(Error::Config(format!("not a checkpoint: format {:?}", env.format)));
    }
    if env.version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            kind: "checkpoint",
            found: env.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    validate(&env.model)?;
    Ok(env.model)
}

pub fn save(model: &Mlp, path: &Path) -> Result<()> {
    fs::write(path, to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Mlp> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

fn validate(model: &Mlp) -> Result<()> {
    let arch = model.architecture();
    let mut fan_in = arch.input_dim;
    if model.blocks().len() != arch.hidden.len() {
        return Err(Error::Shape("block count differs from architecture".into()));
    }
    for (block, &width) in model.blocks().iter().zip(&arch.hidden) {
        let bn = &block.bn;
        if block.dense.weight.dim() != (fan_in, width)
            || block.dense.bias.len() != width
            || [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]
                .iter()
                .any(|t| t.len() != width)
        {
            return Err(Error::Shape(format!("block of width {width} has mismatched tensors")));
        }
        if bn.running_var.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument("running variance must be positive".into()));
        }
        if !(0.0..1.0).contains(&block.dropout_rate) {
            return Err(Error::InvalidArgument("dropout rate outside [0, 1)".into()));
        }
        fan_in = width;
    }
    if model.head().weight.dim() != (fan_in, arch.n_classes) || model.head().bias.len() != arch.n_classes {
        return Err(Error::Shape("head does not match architecture".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{Architecture, ForwardMode};
    use ndarray::Array2;

    #[test]
    fn round_trip_reproduces_outputs_exactly() {
        let mut m = Mlp::new(Architecture::new(4, vec![6, 5], 3).unwrap(), 0.3, 42).unwrap();
        let x = Array2::from_shape_fn((7, 4), |(i, j)| ((i * 4 + j) as f64 * 0.37).sin() * 3.1);
        m.update_bn_stats(&x, 0.3).unwrap();
        let back = from_json(&to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        for mode in [ForwardMode::eval(), ForwardMode::mc(9)] {
            assert_eq!(back.forward(&x, mode).unwrap(), m.forward(&x, mode).unwrap());
        }
    }

    #[test]
    fn rejects_wrong_version() {
        let m = Mlp::new(Architecture::new(2, vec![2], 2).unwrap(), 0.0, 1).unwrap();
        let text = to_json(&m).unwrap().replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(from_json(&text), Err(Error::Version { found: 99, .. })));
    }
}
