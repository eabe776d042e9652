//! Whole-slide inference strategies.

use rayon::prelude::*;

use super::grid::{make_grid, Boundaries};
use super::slide::{unit_to_u8, Slide};
use super::stats::LayerStatsTable;
use crate::error::{Error, Result};
use crate::nncore::{receptive_field, ChannelStats, LayerSpec, Model, Tensor};

pub const DEFAULT_EFFECTIVE: usize = 128;
pub const DEFAULT_WINDOW: usize = 512;

/// Default pixel limit of [`run_monolithic`].
pub const DEFAULT_MAX_PIXELS: usize = 1 << 21;

#[derive(Clone, Debug, PartialEq)]
pub enum InferenceStrategy {
    /// Non-overlapping tiles, each normalized with its own statistics.
    Naive { tile: usize },
    /// Non-overlapping tiles normalized with fixed statistics.
    GlobalStats { table: LayerStatsTable, tile: usize },
    /// Per effective tile, forward a centred `window` and keep the central
    /// `effective` crop.
    Sliding { effective: usize, window: usize },
}

impl InferenceStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InferenceStrategy::Naive { tile } | InferenceStrategy::GlobalStats { tile, .. } if tile == 0 => {
                Err(Error::Config("tile must be >= 1".into()))
            }
            InferenceStrategy::Sliding { effective, window } => {
                if effective == 0 || window <= effective || effective % 2 != 0 || window % 2 != 0 {
                    return Err(Error::Config(format!(
                        "sliding window needs even effective < window, got effective {effective}, window {window}"
                    )));
                }
                if (window - effective) % 2 != 0 {
                    return Err(Error::Config("window - effective must be even".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Seams of this strategy's output on a `width × height` slide.
    pub fn boundaries(&self, width: usize, height: usize) -> Result<Boundaries> {
        match *self {
            InferenceStrategy::Naive { tile } | InferenceStrategy::GlobalStats { tile, .. } => {
                Ok(make_grid(width, height, tile, tile)?.placement_boundaries())
            }
            InferenceStrategy::Sliding { effective, .. } => Ok(Boundaries::regular(width, height, effective)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InferenceStrategy::Naive { .. } => "naive",
            InferenceStrategy::GlobalStats { .. } => "global",
            InferenceStrategy::Sliding { .. } => "sliding",
        }
    }
}

/// Runs `strategy` over `slide`.
pub fn run_strategy(model: &Model, slide: &Slide, strategy: &InferenceStrategy) -> Result<Slide> {
    match strategy {
        InferenceStrategy::Naive { tile } => run_naive(model, slide, *tile),
        InferenceStrategy::GlobalStats { table, tile } => run_global_stats(model, slide, table, *tile),
        InferenceStrategy::Sliding { effective, window } => run_sliding(model, slide, *effective, *window),
    }
}

/// Largest cumulative stride inside `layers`; inputs must be multiples of it.
pub fn size_multiple(layers: &[LayerSpec]) -> usize {
    let mut jump = 1;
    let mut max = 1;
    for l in layers {
        match *l {
            LayerSpec::Conv { stride, .. } => jump *= stride,
            LayerSpec::UpsampleConv { factor, .. } => jump = (jump / factor).max(1),
            _ => {}
        }
        max = max.max(jump);
    }
    max
}

/// Forwards `x`, reflect-padding the bottom/right edges up to the model's
/// size multiple and cropping the output back.
fn forward_image(model: &Model, x: &Tensor, overrides: Option<&[ChannelStats]>) -> Result<Tensor> {
    let m = size_multiple(model.layers());
    let s = x.shape();
    let (h, w) = (s.height.div_ceil(m) * m, s.width.div_ceil(m) * m);
    if (h, w) == (s.height, s.width) {
        return model.forward_with(x, overrides, None);
    }
    let padded = Tensor::from_fn([s.batch, s.channels, h, w], |[t, c, y, xx]| {
        x.at(t, c, crate::nncore::reflect_101(y as isize, s.height), crate::nncore::reflect_101(xx as isize, s.width))
    });
    model.forward_with(&padded, overrides, None)?.crop(0, 0, s.height, s.width)
}

/// Output raster that tracks how often each pixel was written.
struct Canvas {
    width: usize,
    height: usize,
    data: Vec<u8>,
    writes: Vec<u32>,
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        Canvas { width, height, data: vec![0; width * height * 3], writes: vec![0; width * height] }
    }

    /// Writes `out` (item 0) with its top-left corner at `(x0, y0)`.
    fn place(&mut self, out: &Tensor, x0: usize, y0: usize) {
        let (h, w) = (out.shape().height, out.shape().width);
        for i in 0..h {
            for j in 0..w {
                let p = (y0 + i) * self.width + x0 + j;
                for c in 0..3 {
                    self.data[p * 3 + c] = unit_to_u8(out.at(0, c, i, j));
                }
                self.writes[p] += 1;
            }
        }
    }

    fn finish(self, exactly_once: bool) -> Result<Slide> {
        let bad = if exactly_once {
            self.writes.iter().position(|&n| n != 1)
        } else {
            self.writes.iter().position(|&n| n == 0)
        };
        if let Some(p) = bad {
            return Err(Error::invalid(format!(
                "stitching wrote pixel ({}, {}) {} times",
                p % self.width,
                p / self.width,
                self.writes[p]
            )));
        }
        Slide::new(self.width, self.height, self.data)
    }
}

/// One forward pass over the entire slide.
pub fn run_monolithic(model: &Model, slide: &Slide, max_pixels: usize) -> Result<Slide> {
    let pixels = slide.width() * slide.height();
    if pixels > max_pixels {
        return Err(Error::TooLarge { pixels, limit: max_pixels });
    }
    let out = forward_image(model, &slide.to_tensor(), None)?;
    let mut s = Slide::from_tensor(&out)?;
    s.magnification = slide.magnification.clone();
    Ok(s)
}

fn run_tiled(model: &Model, slide: &Slide, tile: usize, overrides: Option<&[ChannelStats]>) -> Result<Slide> {
    let grid = make_grid(slide.width(), slide.height(), tile, tile)?;
    let (tw, th) = (grid.tile_w, grid.tile_h);
    let outputs: Vec<Tensor> = grid
        .origins
        .par_iter()
        .map(|&(x0, y0)| forward_image(model, &slide.window(x0 as isize, y0 as isize, tw, th)?, overrides))
        .collect::<Result<_>>()?;
    let mut canvas = Canvas::new(slide.width(), slide.height());
    for (&(x0, y0), out) in grid.origins.iter().zip(&outputs) {
        canvas.place(out, x0, y0);
    }
    let mut s = canvas.finish(false)?;
    s.magnification = slide.magnification.clone();
    Ok(s)
}

/// Independent non-overlapping tiles (stride = tile, clamped at the edges),
/// each normalized with its own statistics and placed in grid order.
pub fn run_naive(model: &Model, slide: &Slide, tile: usize) -> Result<Slide> {
    run_tiled(model, slide, tile, None)
}

/// Like [`run_naive`] but every norm layer uses the fixed `table`.
pub fn run_global_stats(model: &Model, slide: &Slide, table: &LayerStatsTable, tile: usize) -> Result<Slide> {
    table.check_model(model)?;
    run_tiled(model, slide, tile, Some(table.layers()))
}

/// Placement of one effective cell along an axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Cell {
    /// Output range `[start, end)`.
    start: usize,
    end: usize,
    /// Window origin in slide coordinates (may be negative).
    window_origin: isize,
    /// Offset of `start` inside the window output.
    crop: usize,
}

fn axis_cells(len: usize, effective: usize, margin: usize) -> Vec<Cell> {
    let e = effective.min(len);
    let mut cells = Vec::new();
    let mut start = 0;
    while start < len {
        let end = (start + e).min(len);
        // The effective tile is clamped inside the slide; the cell is the
        // part of it not yet covered.
        let tile_origin = start.min(len - e);
        let window_origin = tile_origin as isize - margin as isize;
        cells.push(Cell { start, end, window_origin, crop: margin + start - tile_origin });
        start = end;
    }
    cells
}

/// Sliding-window instance normalization: for each effective tile, forward
/// the window centred on it (reflect-101 beyond the slide edges) and keep
/// only the central effective crop. The crops partition the output.
pub fn run_sliding(model: &Model, slide: &Slide, effective: usize, window: usize) -> Result<Slide> {
    InferenceStrategy::Sliding { effective, window }.validate()?;
    let margin = (window - effective) / 2;
    if let Ok(rf) = receptive_field(model.layers()) {
        if margin < rf.rf / 2 {
            log::warn!("sliding margin {margin} is below the receptive-field radius {}", rf.rf / 2);
        }
    }
    let xs = axis_cells(slide.width(), effective, margin);
    let ys = axis_cells(slide.height(), effective, margin);
    let jobs: Vec<(Cell, Cell)> = ys.iter().flat_map(|&cy| xs.iter().map(move |&cx| (cy, cx))).collect();
    let outputs: Vec<Tensor> = jobs
        .par_iter()
        .map(|(cy, cx)| {
            let ew = effective.min(slide.width()) + 2 * margin;
            let eh = effective.min(slide.height()) + 2 * margin;
            let win = slide.window(cx.window_origin, cy.window_origin, ew, eh)?;
            let out = forward_image(model, &win, None)?;
            out.crop(cy.crop, cx.crop, cy.end - cy.start, cx.end - cx.start)
        })
        .collect::<Result<_>>()?;
    let mut canvas = Canvas::new(slide.width(), slide.height());
    for ((cy, cx), out) in jobs.iter().zip(&outputs) {
        canvas.place(out, cx.start, cy.start);
    }
    let mut s = canvas.finish(true)?;
    s.magnification = slide.magnification.clone();
    Ok(s)
}
