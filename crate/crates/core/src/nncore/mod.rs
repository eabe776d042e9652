//! Deterministic tensor kernels with manual reverse-mode differentiation.
//!
//! Everything here operates on rank-4 `(batch, channels, height, width)`
//! tensors in row-major order. Training runs in `f32`; gradient checks run the
//! same kernels in `f64`.

mod activation;
mod conv;
pub mod gradcheck;
mod model;
mod norm;
mod pad;
mod receptive;
mod scalar;
mod tape;
mod tensor;
mod tensor_io;

pub use activation::{activation, Activation, LEAKY_SLOPE};
pub use conv::{conv2d, upsample_conv};
pub use model::{parameter_layout, LayerSpec, Model, Param, INIT_STD};
pub use norm::{instance_norm, instance_norm_stats, ChannelStats, DEFAULT_EPS};
pub use pad::{reflect_101, reflection_pad2d, upsample_nearest};
pub use receptive::{receptive_field, ReceptiveField};
pub use scalar::{Precision, Scalar};
pub use tape::{backward, backward_with, BackwardOptions, Gradients, Tape};
pub use tensor::{Shape, Tensor};
pub use tensor_io::{load_tensor, read_tensor, save_tensor, write_tensor, TENSOR_FILE_VERSION};
