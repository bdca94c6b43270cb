//! Personalized reward model: recursive per-stage blocks with a monotone
//! multi-hot scale encoding and a concave basis-function mixture.

mod basis;
mod calibration;
mod checkpoint;
mod encoding;
mod mlp;
mod model;
mod train;

pub use basis::{sigmoid, softmax, softplus, Basis, BasisSet};
pub use calibration::{field_rce, FieldRce};
pub use encoding::{encode_scale, MultiHotScaleEncoding, ScaleEncoder};
pub use model::{mixture_uplift, Example, RewardConfig, RewardModel, RewardVariant};
pub use train::{train, TrainConfig, TrainReport};
