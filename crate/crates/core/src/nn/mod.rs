//! Rank-4 tensors and the differentiable layers the networks are built
//! from. Every layer exposes a forward function and an explicit adjoint; there
//! is no tape or graph.

mod conv;
mod dropout;
pub mod gradcheck;
mod loss;
mod ops;
mod params;
mod tensor;

pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvLayer, KERNEL};
pub use dropout::{apply_mask, dropout_backward, sample_mask, DropMask, DropoutCtx, DropoutSpec};
pub use gradcheck::{gradient_check, gradient_check_steps, GradCheckReport, PatternHasher, Probe, FD_STEP, STEP_LADDER};
pub use loss::{masked_squared_error, mse_loss};
pub use ops::{
    average_pair, average_pair_backward, avgpool2, avgpool2_backward, concat_channels, maxpool2, maxpool2_backward, relu,
    relu_backward, split_channels, upsample_nearest2, upsample_nearest2_backward,
};
pub use params::{ParamEntry, ParamStore};
pub use tensor::Tensor4;
