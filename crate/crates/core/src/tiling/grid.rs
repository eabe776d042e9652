//! Tile grids and the seam index.

use std::fmt::Write as _;

use super::slide::Slide;
use crate::error::{Error, Result};

/// Tile origins covering a `width × height` slide. Tiles never extend past
/// the slide: the last row and column are shifted inward, and tiles larger
/// than the slide shrink to it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileGrid {
    pub width: usize,
    pub height: usize,
    /// Effective tile extent along x and y (the requested size, clamped).
    pub tile_w: usize,
    pub tile_h: usize,
    pub stride: usize,
    /// `(x0, y0)`, row-major.
    pub origins: Vec<(usize, usize)>,
}

fn axis_origins(len: usize, tile: usize, stride: usize) -> Vec<usize> {
    let tile = tile.min(len);
    let mut out = Vec::new();
    let mut o = 0;
    loop {
        let clamped = o.min(len - tile);
        if out.last() != Some(&clamped) {
            out.push(clamped);
        }
        if clamped + tile >= len {
            return out;
        }
        o += stride;
    }
}

pub fn make_grid(width: usize, height: usize, tile: usize, stride: usize) -> Result<TileGrid> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!("cannot tile a {width}x{height} slide")));
    }
    if stride == 0 || stride > tile {
        return Err(Error::invalid(format!("need 0 < stride <= tile, got stride {stride}, tile {tile}")));
    }
    let xs = axis_origins(width, tile, stride);
    let ys = axis_origins(height, tile, stride);
    let origins = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    Ok(TileGrid { width, height, tile_w: tile.min(width), tile_h: tile.min(height), stride, origins })
}

impl TileGrid {
    pub fn x_origins(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.origins.iter().map(|o| o.0).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn y_origins(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.origins.iter().map(|o| o.1).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Where independently processed tiles meet after in-order placement
    /// (later tiles overwrite earlier ones): every interior origin.
    pub fn placement_boundaries(&self) -> Boundaries {
        Boundaries {
            vertical: self.x_origins().into_iter().filter(|&x| x > 0).collect(),
            horizontal: self.y_origins().into_iter().filter(|&y| y > 0).collect(),
        }
    }

    /// `origin_x,origin_y` CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("origin_x,origin_y\n");
        for (x, y) in &self.origins {
            let _ = writeln!(s, "{x},{y}");
        }
        s
    }
}

/// Tile seams: a vertical boundary at `x` separates columns `x - 1` and `x`;
/// a horizontal boundary at `y` separates rows `y - 1` and `y`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Boundaries {
    pub vertical: Vec<usize>,
    pub horizontal: Vec<usize>,
}

impl Boundaries {
    /// Boundaries of a regular partition into cells of size `cell`.
    pub fn regular(width: usize, height: usize, cell: usize) -> Self {
        let cuts = |len: usize| (1..).map(|k| k * cell).take_while(|&b| b < len).collect();
        Boundaries { vertical: cuts(width), horizontal: cuts(height) }
    }
}

pub const SEAM_EPS: f64 = 1e-6;

/// Ratio of the mean absolute adjacent-pixel difference across tile
/// boundaries to the same mean over all other adjacent pairs, pooled over
/// channels and both orientations, with `SEAM_EPS` added to both terms.
pub fn seam_index(slide: &Slide, b: &Boundaries) -> Result<f64> {
    let (w, h) = (slide.width(), slide.height());
    let mut is_v = vec![false; w];
    let mut is_h = vec![false; h];
    let mut any = false;
    for &x in &b.vertical {
        if x > 0 && x < w {
            is_v[x] = true;
            any = true;
        }
    }
    for &y in &b.horizontal {
        if y > 0 && y < h {
            is_h[y] = true;
            any = true;
        }
    }
    if !any {
        return Err(Error::invalid("seam index needs at least one boundary strictly inside the slide"));
    }
    let d = slide.data();
    let (mut sum_b, mut n_b, mut sum_i, mut n_i) = (0u64, 0u64, 0u64, 0u64);
    for y in 0..h {
        for x in 0..w {
            let p = (y * w + x) * 3;
            if x + 1 < w {
                let diff: u64 = (0..3).map(|c| d[p + c].abs_diff(d[p + 3 + c]) as u64).sum();
                if is_v[x + 1] {
                    sum_b += diff;
                    n_b += 3;
                } else {
                    sum_i += diff;
                    n_i += 3;
                }
            }
            if y + 1 < h {
                let q = p + w * 3;
                let diff: u64 = (0..3).map(|c| d[p + c].abs_diff(d[q + c]) as u64).sum();
                if is_h[y + 1] {
                    sum_b += diff;
                    n_b += 3;
                } else {
                    sum_i += diff;
                    n_i += 3;
                }
            }
        }
    }
    let m_b = if n_b > 0 { sum_b as f64 / n_b as f64 } else { 0.0 };
    let m_i = if n_i > 0 { sum_i as f64 / n_i as f64 } else { 0.0 };
    Ok((m_b + SEAM_EPS) / (m_i + SEAM_EPS))
}
