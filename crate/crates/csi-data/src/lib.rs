//! Channel-state-information data handling: synthetic multipath channels,
//! spatial-frequency ↔ angle-delay transforms, normalization into the
//! autoencoder's `[0, 1]` input range, AWGN perturbation, and a binary
//! dataset container.
//!
//! All operations are pure functions of their inputs; every randomized
//! operation takes an explicit seed and is reproducible bit-for-bit.

mod dataset;
mod error;
mod matrix;
mod synth;
mod tensor;

pub use dataset::{load_dataset, save_dataset, Dataset};
pub use error::CsiError;
pub use matrix::{from_angle_delay, to_angle_delay, AngleDelayCsi, CsiMatrix};
pub use synth::{add_awgn, synthesize_channel, ChannelParams};
pub use tensor::{NormalizationMeta, RealCsiTensor};

pub type Result<T> = std::result::Result<T, CsiError>;
