//! Deterministic numerical kernel: tensors, convolution, batch normalization,
//! MSE loss and the Adam optimizer.

mod adam;
mod batchnorm;
mod conv;
mod direct;
mod loss;
mod real;
mod tensor;

#[cfg(test)]
pub(crate) mod testing;

pub use adam::{adam_step, lr_schedule, AdamConfig, AdamState};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, batchnorm_train, BatchNormLayer, BnCache, BnGrads,
    DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM,
};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvLayer, Padding};
pub use loss::{mse_loss, mse_value};
pub use real::Real;
pub use tensor::{permute_ch, permute_hc, Dims4, Tensor4};

/// Whether batch normalization uses batch statistics (and updates running
/// statistics) or the stored running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}
