//! Reverse-mode differentiation over dense NCHW tensors.
//!
//! A [`Graph`] is a topologically ordered list of [`Layer`] nodes. `forward`
//! records every activation plus the auxiliary state each layer needs
//! (pooling argmax, normalized batchnorm inputs, dropout masks); `backward`
//! walks the nodes in reverse and accumulates gradients into each parameter's
//! grad slot and, on request, into the input.
//!
//! Scalars are generic over [`Scalar`] (`f32` for training, `f64` for
//! gradient checks). Convolutions lower to GEMM via im2col.

pub mod checkpoint;
pub mod error;
pub mod graph;
pub mod init;
pub mod layer;
pub mod loss;
pub mod ops;
pub mod optim;
pub mod scalar;
pub mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointManifest};
pub use error::{NdError, Result};
pub use graph::{Graph, GraphBuilder, GraphSpec, GraphState, Mode, Node, NodeId, NodeSpec, Param, ParamCount};
pub use init::{glorot_init, mix_seed};
pub use layer::Layer;
pub use loss::{mse_loss, softmax_cross_entropy};
pub use optim::{rmsprop_update, RmsProp};
pub use scalar::{Precision, Scalar};
pub use tensor::Tensor;
