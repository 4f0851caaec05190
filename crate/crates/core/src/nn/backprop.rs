use ndarray::{Array1, Array2, Axis};

use super::model::{sigmoid, ForwardMode, Mlp, ParamKind, Tape};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockGrads {
    pub dense: DenseGrads,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// Gradient of a scalar loss with respect to every trainable tensor of an [`Mlp`].
///
/// Tensor order matches [`Mlp::param_tensors`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<BlockGrads>,
    pub head: DenseGrads,
}

impl Gradients {
    pub fn zeros_like(model: &Mlp) -> Self {
        let blocks = model
            .blocks()
            .iter()
            .map(|b| BlockGrads {
                dense: DenseGrads {
                    weight: Array2::zeros(b.dense.weight.dim()),
                    bias: Array1::zeros(b.dense.bias.len()),
                },
                gamma: Array1::zeros(b.bn.gamma.len()),
                beta: Array1::zeros(b.bn.beta.len()),
            })
            .collect();
        let head = DenseGrads {
            weight: Array2::zeros(model.head().weight.dim()),
            bias: Array1::zeros(model.head().bias.len()),
        };
        Self { blocks, head }
    }

    pub fn tensors(&self) -> Vec<(ParamKind, &[f64])> {
        let mut out = Vec::with_capacity(self.blocks.len() * 4 + 2);
        for b in &self.blocks {
            out.push((ParamKind::Weight, b.dense.weight.as_slice().expect("contiguous")));
            out.push((ParamKind::Bias, b.dense.bias.as_slice().expect("contiguous")));
            out.push((ParamKind::BnGamma, b.gamma.as_slice().expect("contiguous")));
            out.push((ParamKind::BnBeta, b.beta.as_slice().expect("contiguous")));
        }
        out.push((ParamKind::Weight, self.head.weight.as_slice().expect("contiguous")));
        out.push((ParamKind::Bias, self.head.bias.as_slice().expect("contiguous")));
        out
    }

    /// `self += other`, element by element.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.dense.weight += &b.dense.weight;
            a.dense.bias += &b.dense.bias;
            a.gamma += &b.gamma;
            a.beta += &b.beta;
        }
        self.head.weight += &other.head.weight;
        self.head.bias += &other.head.bias;
    }

    /// True when the tensor shapes match `model`'s parameters.
    pub fn is_congruent_with(&self, model: &Mlp) -> bool {
        let ours = self.tensors();
        let theirs = model.param_tensors();
        ours.len() == theirs.len()
            && ours
                .iter()
                .zip(&theirs)
                .all(|((ka, a), (kb, b))| ka == kb && a.len() == b.len())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

/// Analytic gradient of a loss defined on the outputs of one or more forward passes.
///
/// The model is run once per entry of `passes`; `loss` receives the probability matrices in
/// the same order and returns the scalar loss together with its partial derivative with
/// respect to each matrix. Backpropagation through every pass is summed.
pub fn grad<F>(
    model: &Mlp,
    inputs: &Array2<f64>,
    passes: &[ForwardMode],
    loss: F,
) -> Result<(f64, Gradients)>
where
    F: FnOnce(&[Array2<f64>]) -> (f64, Vec<Array2<f64>>),
{
    if passes.is_empty() {
        return Err(Error::InvalidArgument("grad needs at least one pass".into()));
    }
    let tapes = passes
        .iter()
        .map(|&mode| model.forward_taped(inputs, mode))
        .collect::<Result<Vec<_>>>()?;
    let probs: Vec<Array2<f64>> = tapes.iter().map(|t| t.probs.clone()).collect();
    let (value, dprobs) = loss(&probs);
    if !value.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    if dprobs.len() != tapes.len() {
        return Err(Error::Shape(format!(
            "loss returned {} output gradients for {} passes",
            dprobs.len(),
            tapes.len()
        )));
    }
    let mut total: Option<Gradients> = None;
    for (tape, dp) in tapes.iter().zip(&dprobs) {
        if dp.dim() != tape.probs.dim() {
            return Err(Error::Shape("output gradient shape differs from outputs".into()));
        }
        let g = backward(model, tape, dp);
        match total.as_mut() {
            Some(t) => t.accumulate(&g),
            None => total = Some(g),
        }
    }
    let total = total.expect("at least one pass");
    if !total.all_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    Ok((value, total))
}

fn backward(model: &Mlp, tape: &Tape, dprobs: &Array2<f64>) -> Gradients {
    // softmax: dz_j = p_j (dp_j - sum_k dp_k p_k)
    let p = &tape.probs;
    let inner = (dprobs * p).sum_axis(Axis(1)).insert_axis(Axis(1));
    let dlogits = p * &(dprobs - &inner);

    let head = DenseGrads {
        weight: tape.head_input.t().dot(&dlogits),
        bias: dlogits.sum_axis(Axis(0)),
    };
    let mut da = dlogits.dot(&model.head().weight.t());

    let mut blocks = Vec::with_capacity(model.blocks().len());
    for (i, (block, bt)) in model.blocks().iter().zip(&tape.blocks).enumerate().rev() {
        let dh = match &bt.mask {
            Some(m) => &da * m,
            None => da,
        };
        let dy = dh * &bt.pre_act.mapv(sigmoid);
        let gamma = (&dy * &bt.xhat).sum_axis(Axis(0));
        let beta = dy.sum_axis(Axis(0));
        let dxhat = &dy * &block.bn.gamma;
        let dz = if bt.batch_stats {
            let n = dxhat.nrows() as f64;
            let sum_dxhat = dxhat.sum_axis(Axis(0));
            let sum_dxhat_xhat = (&dxhat * &bt.xhat).sum_axis(Axis(0));
            let centered = &dxhat * n - &sum_dxhat - &bt.xhat * &sum_dxhat_xhat;
            centered * &(&bt.inv_std / n)
        } else {
            &dxhat * &bt.inv_std
        };
        let dense = DenseGrads {
            weight: bt.input.t().dot(&dz),
            bias: dz.sum_axis(Axis(0)),
        };
        da = if i > 0 {
            dz.dot(&block.dense.weight.t())
        } else {
            Array2::zeros((0, 0))
        };
        blocks.push(BlockGrads { dense, gamma, beta });
    }
    blocks.reverse();
    Gradients { blocks, head }
}
