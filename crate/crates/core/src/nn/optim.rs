use super::backprop::Gradients;
use super::model::{Mlp, ParamKind};
use crate::error::{Error, Result};

/// Which tensors an update touches.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    All,
    BnAffine,
}

impl ParamGroup {
    fn includes(self, kind: ParamKind) -> bool {
        match self {
            ParamGroup::All => true,
            ParamGroup::BnAffine => kind.is_bn_affine(),
        }
    }
}

/// `theta <- theta - lr * (grad + weight_decay * theta)` over every trainable tensor.
/// BN running statistics are not parameters and are left alone.
pub fn sgd_step(model: &mut Mlp, grad: &Gradients, lr: f64, weight_decay: f64) -> Result<()> {
    sgd_step_group(model, grad, lr, weight_decay, ParamGroup::All)
}

pub fn sgd_step_group(
    model: &mut Mlp,
    grad: &Gradients,
    lr: f64,
    weight_decay: f64,
    group: ParamGroup,
) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {lr}")));
    }
    if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "weight decay must be >= 0, got {weight_decay}"
        )));
    }
    if !grad.is_congruent_with(model) {
        return Err(Error::Shape("gradient does not match model parameters".into()));
    }
    if !grad.all_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    let grads = grad.tensors();
    for ((kind, params), (_, g)) in model.param_tensors_mut().into_iter().zip(grads) {
        if !group.includes(kind) {
            continue;
        }
        if weight_decay == 0.0 {
            for (p, &gi) in params.iter_mut().zip(g) {
                *p -= lr * gi;
            }
        } else {
            for (p, &gi) in params.iter_mut().zip(g) {
                *p -= lr * (gi + weight_decay * *p);
            }
        }
    }
    Ok(())
}
