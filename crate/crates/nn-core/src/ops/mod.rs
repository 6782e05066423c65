mod basic;
mod conv;
mod dense;
mod matmul;
mod norm;

pub use basic::{
    activation, add, concat_axis, gather, gelu, mean, mse, mul, relu, reshape, scale, sigmoid,
    slice_axis, softmax_xent_bits, sub, sum, Activation, GATHER_ZERO,
};
pub use conv::conv2d;
pub use dense::dense;
pub use matmul::{matmul_batched, mm, mm_at, mm_bt};
pub use norm::{batch_norm_eval, batch_norm_train, layer_norm, softmax_last, BatchNormStats};
