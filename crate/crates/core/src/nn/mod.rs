//! Minimal dense-tensor CNN framework: layers, forward/backward, softmax
//! cross-entropy, SGD with momentum, gradient checking, and checkpoints.
//!
//! Everything is float32, single-threaded, and deterministic under a seed;
//! the gradient checker recomputes in float64.

pub mod checkpoint;
pub mod gradcheck;
pub mod kernels;
pub mod layer;
pub mod loss;
pub mod network;
pub mod pass;
pub mod sgd;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use gradcheck::gradient_check;
pub use layer::LayerSpec;
pub use loss::{prob_positive, softmax_probs, softmax_xent};
pub use network::{Network, Tape};
pub use sgd::SgdOptimizer;
pub use tensor::Tensor;
