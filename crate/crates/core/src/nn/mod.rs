//! Numeric kernels for inference: grouped 1-D convolution with streaming
//! state, linear layers, layer normalization and activations. All single
//! precision.

mod activation;
mod conv;
mod linear;
mod matrix;
mod norm;

pub use activation::{log_softmax, log_softmax_inplace, relu_inplace};
pub use conv::{Conv1d, ConvSpec, ConvState, GroupWeights};
pub use linear::Linear;
pub use matrix::Matrix;
pub use norm::LayerNormParams;
