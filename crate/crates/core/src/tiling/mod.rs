//! Slides, tile grids, inference strategies and seam measurement.

mod grid;
mod infer;
mod slide;
mod stats;

pub use grid::{make_grid, seam_index, Boundaries, TileGrid, SEAM_EPS};
pub use infer::{
    run_global_stats, run_monolithic, run_naive, run_sliding, run_strategy, size_multiple, InferenceStrategy,
    DEFAULT_EFFECTIVE, DEFAULT_MAX_PIXELS, DEFAULT_WINDOW,
};
pub use slide::{u8_to_unit, unit_to_u8, Slide};
pub use stats::{collect_running_stats, LayerStatsTable};
