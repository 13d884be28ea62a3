//! Attention-based coarse-to-fine point-cloud completion: model,
//! differentiation, training loop, and inference.

mod adam;
mod infer;
mod model;
mod train;

pub use adam::{adam_step, AdamParams, AdamState};
pub use infer::{complete, forward, resample_input, Normalizer};
pub use model::{CompletionConfig, CompletionModel};
pub use train::{
    backward, loss, loss_and_grads, loss_and_grads_inner, resample_points, train,
    ChamferSelections, TrainOptions, TrainReport,
};
