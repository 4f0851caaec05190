//! Minimal feed-forward network: dense layers, batch normalization, dropout, softmax,
//! analytic gradients and plain SGD.

pub mod backprop;
pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod optim;

pub use backprop::{grad, Gradients};
pub use loss::{complementary_cross_entropy, cross_entropy, entropy, PROB_CLIP};
pub use model::{
    argmax, argmax_rows, softmax_rows, Architecture, BnUsage, DropoutMode, ForwardMode, Mlp,
    ParamKind,
};
pub use optim::{sgd_step, sgd_step_group, ParamGroup};
