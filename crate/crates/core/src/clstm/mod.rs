//! Dense-tensor network core: convolutional LSTM layers, batch normalization,
//! dropout and a dense regression head, each with a hand-written backward pass.
//!
//! Activations are kept time-major (`[T][C][B][W]`) internally so each
//! recurrent step works on one contiguous block; the public entry points take
//! and return the row-major shapes documented on each function.

mod batchnorm;
mod convlstm;
mod dense;
mod dropout;
mod gemm;
mod model_io;
mod network;
mod tensor;

use std::path::PathBuf;

use thiserror::Error;

pub use batchnorm::{batchnorm_forward, BatchNormParams, BatchStats, BN_EPS, BN_MOMENTUM};
pub use convlstm::{convlstm_cell_forward, convlstm_layer_forward, ConvLstmParams, GATE_NAMES};
pub use dense::DenseParams;
pub use dropout::dropout;
pub use model_io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use network::{
    loss_and_gradients, network_forward, predict, shape_input, stack_batch, Gradients, LossOutput, ModelState,
    NetworkConfig, DENSE_SIZES,
};
pub use tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training batch of {0} is too small for batch normalization (need at least 2)")]
    BatchTooSmall(usize),
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite activation in {layer}")]
    NonFinite { layer: &'static str },
    #[error("sequence has {have} frames, network input needs {need}")]
    TooFewFrames { have: usize, need: usize },
    #[error("malformed model file: {0}")]
    ModelFormat(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
