//! Minimal deterministic differentiable core: dense layers, per-class
//! softmax heads, momentum SGD with step decay, He initialization and a
//! finite-difference gradient checker. All arithmetic is `f64`.

mod gradcheck;
mod head;
mod layer;
mod mlp;
mod sgd;
mod tensor;

pub use gradcheck::{grad_check, grad_check_with, relative_error, GradCheckReport, ParamId, ParamKind};
pub(crate) use head::check_pair_layout;
pub use head::{pair_log_probs, pair_softmax, per_class_softmax, sigmoid, softplus, PredictionMatrix};
pub use layer::{he_init, he_std, LayerSnapshot, LinearLayer};
pub use mlp::{forward_mlp, ForwardCache, Mlp};
pub use sgd::{sgd_step, SgdConfig};
pub use tensor::Tensor2;
