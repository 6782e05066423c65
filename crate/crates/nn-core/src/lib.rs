//! Minimal dense-tensor substrate with reverse-mode gradients.
//!
//! Values are plain `f64` tensors; differentiable computations are recorded
//! on a [`Tape`] that replays hand-written backward rules in reverse order.
//! Everything the lossy codec and the token language model need is built
//! from a small set of primitives, each of which is finite-difference
//! checked in the test suite.

mod attention;
mod checkpoint;
mod error;
mod gradcheck;
mod ops;
mod optim;
mod params;
mod tape;
mod tensor;

pub use attention::{attention_2d, attention_seq, AttentionConfig, AttentionParams, BiasTable};
pub use checkpoint::{load_checkpoint_into, save_checkpoint, sha256_hex_of_file};
pub use error::NnError;
pub use gradcheck::{grad_check, loss_and_param_grads, GradCheckOptions};
pub use ops::*;
pub use optim::{cosine_lr, Adam};
pub use params::{kaiming_uniform, normal_init, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, NnError>;
