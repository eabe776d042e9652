//! Stain densities of real and virtual slides and their comparison.

mod report;
mod stain;
mod stats;

pub use report::{
    boxplot_svg, emit_boxplot_svg, evaluate_pair, DensityReport, DensityRow, StainSummary, REPORT_HEADER,
};
pub use stain::{abs_rel_diff, density, stain_mask, Mask, StainRef, DEFAULT_STAIN_TOL, MAX_RGB_DISTANCE};
pub use stats::{aggregate, box_stats, quantile_sorted, AggregateStats, BoxStats};
