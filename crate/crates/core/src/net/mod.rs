//! Multi-scale deep boundary detector implemented from scratch on `f64`
//! tensors: shared convolutional trunk, per-scale side heads, side-output
//! and scale fusion, class-balanced losses, staged SGD training and
//! gradient verification.

pub mod backward;
pub mod checkpoint;
mod forward;
pub mod gradcheck;
pub mod layers;
mod loss;
pub mod model;
mod tensor;
pub mod train;

pub use backward::{backward, backward_masked, loss, LossSelector, Sample};
pub use forward::{
    forward_base, head_output, multiscale_fuse, predict, predict_scale, predict_side, scale_activation, sigmoid,
    PROB_EPS,
};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::ConvLayer;
pub use loss::weighted_bce;
pub use model::{Architecture, BaseNet, ModelParams, ParamGroup, ScaleBranch, SideHead, UpdateSet};
pub use tensor::Tensor;
pub use train::{train_greedy_phase, train_stage_greedy, train_stage_multiscale, train_stage_scale, StageLog, TrainConfig};
