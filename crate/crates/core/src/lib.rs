//! Unpaired stain translation with tile-consistent inference.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`nncore`]: tensors, layers, reverse-mode gradients, gradient checking
//!   and receptive-field arithmetic.
//! - [`cyclegan`]: generator/discriminator builders, losses, image pool, ADAM,
//!   (synchronous multi-worker) training steps and checkpoints.
//! - [`tiling`]: slides, tile grids, the naive / global-statistics /
//!   sliding-window inference strategies and the seam index.
//! - [`synthdata`]: procedural two-domain "stain" data with known ground truth.
//! - [`quantify`]: colour-threshold stain densities, relative differences,
//!   aggregate statistics and CSV/SVG reports.

pub mod config;
pub mod cyclegan;
mod error;
pub mod nncore;
pub mod quantify;
pub mod synthdata;
pub mod tiling;

pub use error::{Error, Result};
pub use nncore::{ChannelStats, LayerSpec, Model, Shape, Tensor};
pub use tiling::Slide;

