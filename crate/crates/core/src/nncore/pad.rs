//! Border handling and resampling: reflect-101 padding and nearest upsampling.

use super::scalar::Scalar;
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

/// Maps a possibly out-of-range coordinate into `[0, n)` by reflect-101
/// mirroring about the edge pixels (edge pixels are not duplicated). Repeats
/// the mirror for coordinates more than one period away.
#[inline]
pub fn reflect_101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Pads both spatial axes by `p` with reflect-101.
pub fn reflection_pad2d<T: Scalar>(x: &Tensor<T>, p: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if p >= s.height.min(s.width) {
        return Err(Error::invalid(format!(
            "reflection pad {p} must be smaller than the spatial size {}x{}",
            s.height, s.width
        )));
    }
    let (ho, wo) = (s.height + 2 * p, s.width + 2 * p);
    let cols: Vec<usize> = (0..wo).map(|x| reflect_101(x as isize - p as isize, s.width)).collect();
    let mut out = Tensor::zeros(Shape::new(s.batch, s.channels, ho, wo));
    for t in 0..s.batch {
        for c in 0..s.channels {
            let src = x.plane(t, c);
            let dst = out.plane_mut(t, c);
            for y in 0..ho {
                let sy = reflect_101(y as isize - p as isize, s.height);
                let srow = &src[sy * s.width..(sy + 1) * s.width];
                for (d, &sx) in dst[y * wo..(y + 1) * wo].iter_mut().zip(&cols) {
                    *d = srow[sx];
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn reflection_pad2d_backward<T: Scalar>(dy: &Tensor<T>, input: Shape, p: usize) -> Tensor<T> {
    let (ho, wo) = (input.height + 2 * p, input.width + 2 * p);
    let mut dx = Tensor::zeros(input);
    for t in 0..input.batch {
        for c in 0..input.channels {
            let src = dy.plane(t, c);
            let dst = dx.plane_mut(t, c);
            for y in 0..ho {
                let sy = reflect_101(y as isize - p as isize, input.height);
                for x in 0..wo {
                    let sx = reflect_101(x as isize - p as isize, input.width);
                    let i = sy * input.width + sx;
                    dst[i] = dst[i] + src[y * wo + x];
                }
            }
        }
    }
    dx
}

/// Nearest-neighbour upsampling: each pixel becomes a `factor`×`factor` block.
pub fn upsample_nearest<T: Scalar>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(Error::invalid("upsample factor must be >= 1"));
    }
    let s = x.shape();
    let (ho, wo) = (s.height * factor, s.width * factor);
    let mut out = Tensor::zeros(Shape::new(s.batch, s.channels, ho, wo));
    for t in 0..s.batch {
        for c in 0..s.channels {
            let src = x.plane(t, c);
            let dst = out.plane_mut(t, c);
            for y in 0..ho {
                let srow = &src[(y / factor) * s.width..(y / factor + 1) * s.width];
                for (x, d) in dst[y * wo..(y + 1) * wo].iter_mut().enumerate() {
                    *d = srow[x / factor];
                }
            }
        }
    }
    Ok(out)
}

pub(crate) fn upsample_nearest_backward<T: Scalar>(dy: &Tensor<T>, input: Shape, factor: usize) -> Tensor<T> {
    let wo = input.width * factor;
    let mut dx = Tensor::zeros(input);
    for t in 0..input.batch {
        for c in 0..input.channels {
            let src = dy.plane(t, c);
            let dst = dx.plane_mut(t, c);
            for y in 0..input.height * factor {
                let drow = &mut dst[(y / factor) * input.width..(y / factor + 1) * input.width];
                for (x, &g) in src[y * wo..(y + 1) * wo].iter().enumerate() {
                    drow[x / factor] = drow[x / factor] + g;
                }
            }
        }
    }
    dx
}
