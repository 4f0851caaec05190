use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Added to variances before the square root in batch normalization.
pub const BN_EPS: f64 = 1e-5;

/// Floor applied to batch variances before they enter the running statistics.
const VAR_FLOOR: f64 = 1e-12;

/// Layer sizes of a feed-forward classifier.
///
/// Each hidden width `h` expands to `dense(h) -> batchnorm -> softplus -> dropout`;
/// a final dense layer maps onto `n_classes` logits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub n_classes: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, n_classes: usize) -> Result<Self> {
        if input_dim == 0 || n_classes < 2 || hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidArgument(format!(
                "architecture needs input_dim > 0, n_classes >= 2 and non-zero widths \
                 (got {input_dim}, {hidden:?}, {n_classes})"
            )));
        }
        Ok(Self {
            input_dim,
            hidden,
            n_classes,
        })
    }

    /// Two hidden blocks of width 64.
    pub fn default_for(input_dim: usize, n_classes: usize) -> Result<Self> {
        Self::new(input_dim, vec![64, 64], n_classes)
    }
}

/// Whether dropout masks are sampled during a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropoutMode {
    Deterministic,
    Dropout { seed: u64 },
}

/// Which statistics batch normalization uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BnUsage {
    UseRunning,
    UseBatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardMode {
    pub dropout: DropoutMode,
    pub bn: BnUsage,
}

impl ForwardMode {
    /// Deterministic pass with running statistics: the plain classifier.
    pub const fn eval() -> Self {
        Self {
            dropout: DropoutMode::Deterministic,
            bn: BnUsage::UseRunning,
        }
    }

    /// One stochastic MC-dropout pass with running statistics.
    pub const fn mc(seed: u64) -> Self {
        Self {
            dropout: DropoutMode::Dropout { seed },
            bn: BnUsage::UseRunning,
        }
    }

    /// Training pass: dropout on, batch statistics.
    pub const fn train(seed: u64) -> Self {
        Self {
            dropout: DropoutMode::Dropout { seed },
            bn: BnUsage::UseBatch,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `[in, out]`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound));
        Self {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    /// Once set, forward passes use the running statistics whatever [`BnUsage`] asks for.
    pub frozen: bool,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            frozen: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenBlock {
    pub dense: Dense,
    pub bn: BatchNorm,
    pub dropout_rate: f64,
}

/// Role of a parameter tensor, used to restrict updates to a subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    BnGamma,
    BnBeta,
}

impl ParamKind {
    pub fn is_bn_affine(self) -> bool {
        matches!(self, ParamKind::BnGamma | ParamKind::BnBeta)
    }
}

/// Feed-forward classifier with batch normalization and dropout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    arch: Architecture,
    pub(crate) blocks: Vec<HiddenBlock>,
    pub(crate) head: Dense,
}

/// Per-block activations kept for the backward pass.
#[derive(Debug)]
pub(crate) struct BlockTape {
    pub input: Array2<f64>,
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub pre_act: Array2<f64>,
    /// Inverted-dropout scale per element (`0` or `1/(1-p)`), absent when no mask was drawn.
    pub mask: Option<Array2<f64>>,
    pub batch_stats: bool,
}

#[derive(Debug)]
pub(crate) struct Tape {
    pub blocks: Vec<BlockTape>,
    pub head_input: Array2<f64>,
    pub probs: Array2<f64>,
}

struct Pass {
    probs: Array2<f64>,
    tape: Option<Tape>,
    batch_stats: Vec<(Array1<f64>, Array1<f64>)>,
}

impl Mlp {
    /// Fresh model with Glorot-uniform weights drawn from `seed`, dropout `dropout_rate` at every site.
    pub fn new(arch: Architecture, dropout_rate: f64, seed: u64) -> Result<Self> {
        check_rate(dropout_rate)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::with_capacity(arch.hidden.len());
        let mut fan_in = arch.input_dim;
        for &width in &arch.hidden {
            blocks.push(HiddenBlock {
                dense: Dense::init(fan_in, width, &mut rng),
                bn: BatchNorm::new(width),
                dropout_rate,
            });
            fan_in = width;
        }
        let head = Dense::init(fan_in, arch.n_classes, &mut rng);
        Ok(Self { arch, blocks, head })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    pub fn blocks(&self) -> &[HiddenBlock] {
        &self.blocks
    }

    pub fn head(&self) -> &Dense {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Dense {
        &mut self.head
    }

    pub fn param_count(&self) -> usize {
        self.param_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn dropout_rates(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.dropout_rate).collect()
    }

    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        check_rate(rate)?;
        for b in &mut self.blocks {
            b.dropout_rate = rate;
        }
        Ok(())
    }

    pub fn is_bn_frozen(&self) -> bool {
        self.blocks.iter().all(|b| b.bn.frozen)
    }

    pub fn set_bn_frozen(&mut self, frozen: bool) {
        for b in &mut self.blocks {
            b.bn.frozen = frozen;
        }
    }

    /// Trainable tensors in a fixed order: per block `W, b, gamma, beta`, then head `W, b`.
    pub fn param_tensors(&self) -> Vec<(ParamKind, &[f64])> {
        let mut out = Vec::with_capacity(self.blocks.len() * 4 + 2);
        for b in &self.blocks {
            out.push((ParamKind::Weight, slice(&b.dense.weight)));
            out.push((ParamKind::Bias, slice1(&b.dense.bias)));
            out.push((ParamKind::BnGamma, slice1(&b.bn.gamma)));
            out.push((ParamKind::BnBeta, slice1(&b.bn.beta)));
        }
        out.push((ParamKind::Weight, slice(&self.head.weight)));
        out.push((ParamKind::Bias, slice1(&self.head.bias)));
        out
    }

    pub fn param_tensors_mut(&mut self) -> Vec<(ParamKind, &mut [f64])> {
        let mut out = Vec::with_capacity(self.blocks.len() * 4 + 2);
        for b in &mut self.blocks {
            out.push((ParamKind::Weight, b.dense.weight.as_slice_mut().expect("contiguous")));
            out.push((ParamKind::Bias, b.dense.bias.as_slice_mut().expect("contiguous")));
            out.push((ParamKind::BnGamma, b.bn.gamma.as_slice_mut().expect("contiguous")));
            out.push((ParamKind::BnBeta, b.bn.beta.as_slice_mut().expect("contiguous")));
        }
        out.push((ParamKind::Weight, self.head.weight.as_slice_mut().expect("contiguous")));
        out.push((ParamKind::Bias, self.head.bias.as_slice_mut().expect("contiguous")));
        out
    }

    /// Running statistics of every BN layer as `(mean, var)`.
    pub fn bn_stats(&self) -> Vec<(&Array1<f64>, &Array1<f64>)> {
        self.blocks
            .iter()
            .map(|b| (&b.bn.running_mean, &b.bn.running_var))
            .collect()
    }

    /// Class-probability matrix `[batch, classes]`.
    pub fn forward(&self, inputs: &Array2<f64>, mode: ForwardMode) -> Result<Array2<f64>> {
        Ok(self.run(inputs, mode, false, false)?.probs)
    }

    pub(crate) fn forward_taped(&self, inputs: &Array2<f64>, mode: ForwardMode) -> Result<Tape> {
        let pass = self.run(inputs, mode, true, false)?;
        Ok(pass.tape.expect("tape requested"))
    }

    /// Blend the batch statistics of `batch` into the running statistics and freeze them.
    ///
    /// `running <- (1 - momentum) * running + momentum * batch_stat`. Batch statistics come
    /// from a deterministic pass where every layer normalizes with its own batch statistics.
    pub fn update_bn_stats(&mut self, batch: &Array2<f64>, momentum: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&momentum) || !momentum.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "BN momentum must lie in [0, 1], got {momentum}"
            )));
        }
        if batch.nrows() < 2 {
            return Err(Error::BatchTooSmall(batch.nrows()));
        }
        let mode = ForwardMode {
            dropout: DropoutMode::Deterministic,
            bn: BnUsage::UseBatch,
        };
        let stats = self.run(batch, mode, false, true)?.batch_stats;
        for (block, (mean, var)) in self.blocks.iter_mut().zip(stats) {
            let bn = &mut block.bn;
            let var = var.mapv(|v| v.max(VAR_FLOOR));
            bn.running_mean = &bn.running_mean * (1.0 - momentum) + &mean * momentum;
            bn.running_var = (&bn.running_var * (1.0 - momentum) + &var * momentum)
                .mapv(|v| v.max(VAR_FLOOR));
            bn.frozen = true;
        }
        Ok(())
    }

    /// Replace the running statistics by the exact statistics of `data`, computed layer by
    /// layer with upstream layers already normalized by their new running statistics.
    pub(crate) fn set_population_stats(&mut self, data: &Array2<f64>) -> Result<()> {
        self.validate_input(data)?;
        if data.nrows() < 2 {
            return Err(Error::BatchTooSmall(data.nrows()));
        }
        let mut a = data.clone();
        for block in &mut self.blocks {
            let z = block.dense.apply(&a);
            let (mean, var) = column_stats(&z);
            block.bn.running_mean = mean;
            block.bn.running_var = var.mapv(|v| v.max(VAR_FLOOR));
            let inv_std = block.bn.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let xhat = (&z - &block.bn.running_mean) * &inv_std;
            let y = &xhat * &block.bn.gamma + &block.bn.beta;
            a = y.mapv(softplus);
        }
        Ok(())
    }

    fn validate_input(&self, inputs: &Array2<f64>) -> Result<()> {
        if inputs.ncols() != self.arch.input_dim {
            return Err(Error::Shape(format!(
                "input has {} features, model expects {}",
                inputs.ncols(),
                self.arch.input_dim
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::Shape("empty input batch".into()));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forward input"));
        }
        Ok(())
    }

    fn run(
        &self,
        inputs: &Array2<f64>,
        mode: ForwardMode,
        keep_tape: bool,
        force_batch_stats: bool,
    ) -> Result<Pass> {
        self.validate_input(inputs)?;
        let n = inputs.nrows();
        let mut rng = match mode.dropout {
            DropoutMode::Dropout { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            DropoutMode::Deterministic => None,
        };
        let mut tapes = Vec::new();
        let mut batch_stats = Vec::new();
        let mut a = inputs.clone();
        for block in &self.blocks {
            let z = block.dense.apply(&a);
            let use_batch =
                force_batch_stats || (mode.bn == BnUsage::UseBatch && !block.bn.frozen);
            let (mean, var) = if use_batch {
                if n < 2 {
                    return Err(Error::BatchTooSmall(n));
                }
                let (m, v) = column_stats(&z);
                if force_batch_stats {
                    batch_stats.push((m.clone(), v.clone()));
                }
                (m, v)
            } else {
                (block.bn.running_mean.clone(), block.bn.running_var.clone())
            };
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let xhat = (&z - &mean) * &inv_std;
            let pre_act = &xhat * &block.bn.gamma + &block.bn.beta;
            let mut h = pre_act.mapv(softplus);
            let mask = match rng.as_mut() {
                Some(rng) if block.dropout_rate > 0.0 => {
                    let keep_scale = 1.0 / (1.0 - block.dropout_rate);
                    let m = Array2::from_shape_fn(h.dim(), |_| {
                        if rng.random::<f64>() < block.dropout_rate {
                            0.0
                        } else {
                            keep_scale
                        }
                    });
                    h *= &m;
                    Some(m)
                }
                _ => None,
            };
            let next = h;
            if keep_tape {
                tapes.push(BlockTape {
                    input: a,
                    xhat,
                    inv_std,
                    pre_act,
                    mask,
                    batch_stats: use_batch,
                });
            }
            a = next;
        }
        let logits = self.head.apply(&a);
        let probs = softmax_rows(&logits);
        let tape = keep_tape.then(|| Tape {
            blocks: tapes,
            head_input: a,
            probs: probs.clone(),
        });
        Ok(Pass {
            probs,
            tape,
            batch_stats,
        })
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored contiguously")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored contiguously")
}

/// Column means and biased variances.
pub(crate) fn column_stats(z: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let n = z.nrows() as f64;
    let mean = z.sum_axis(Axis(0)) / n;
    let centered = z - &mean;
    let var = (&centered * &centered).sum_axis(Axis(0)) / n;
    (mean, var)
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub fn argmax_rows(probs: &Array2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|r| argmax(r.as_slice().expect("row-major")))
        .collect()
}
