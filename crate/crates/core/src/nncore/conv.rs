//! 2-D cross-correlation via chunked im2col + GEMM.

use super::pad::upsample_nearest;
use super::scalar::{gemm, MatView, Scalar};
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

/// Upper bound on im2col buffer elements; large inputs are processed in
/// bands of output rows.
const COL_BUDGET: usize = 1 << 21;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h: usize,
    pub w: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: Shape, w: Shape, stride: usize, pad: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be >= 1"));
        }
        if w.height != w.width || w.height == 0 {
            return Err(Error::shape(format!("conv2d kernel must be square, got {w}")));
        }
        if x.channels != w.channels {
            return Err(Error::shape(format!(
                "conv2d: input has {} channels, kernel expects {}",
                x.channels, w.channels
            )));
        }
        let k = w.height;
        if x.height + 2 * pad < k || x.width + 2 * pad < k {
            return Err(Error::shape(format!("conv2d: {k}x{k} kernel larger than padded input {x}")));
        }
        Ok(ConvGeom {
            cin: x.channels,
            cout: w.batch,
            k,
            stride,
            pad,
            h: x.height,
            w: x.width,
            ho: (x.height + 2 * pad - k) / stride + 1,
            wo: (x.width + 2 * pad - k) / stride + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn rows_per_band(&self) -> usize {
        (COL_BUDGET / (self.col_rows() * self.wo).max(1)).clamp(1, self.ho)
    }

    /// Valid output column range `[lo, hi)` for kernel column `kx`.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let (s, pad) = (self.stride, self.pad);
        let lo = if pad > kx { (pad - kx).div_ceil(s) } else { 0 }.min(self.wo);
        let hi = if self.w + pad > kx { ((self.w - 1 + pad - kx) / s + 1).min(self.wo) } else { 0 };
        (lo, hi.max(lo))
    }

    fn bands(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let step = self.rows_per_band();
        (0..self.ho).step_by(step).map(move |y0| (y0, (y0 + step).min(self.ho)))
    }
}

fn im2col<T: Scalar>(src: &[T], g: &ConvGeom, oy0: usize, oy1: usize, col: &mut [T]) {
    let n = (oy1 - oy0) * g.wo;
    let (k, s, pad) = (g.k, g.stride, g.pad);
    for ci in 0..g.cin {
        let plane = &src[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * n..(row + 1) * n];
                let (lo, hi) = g.valid_cols(kx);
                for (r, oy) in (oy0..oy1).enumerate() {
                    let d = &mut dst[r * g.wo..(r + 1) * g.wo];
                    let iy = (oy * s + ky) as isize - pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        d.fill(T::zero());
                        continue;
                    }
                    let srow = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    d[..lo].fill(T::zero());
                    d[hi..].fill(T::zero());
                    if hi == lo {
                        continue;
                    }
                    if s == 1 {
                        let start = lo + kx - pad;
                        d[lo..hi].copy_from_slice(&srow[start..start + (hi - lo)]);
                    } else {
                        for (ox, v) in d.iter_mut().enumerate().take(hi).skip(lo) {
                            *v = srow[ox * s + kx - pad];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: &ConvGeom, oy0: usize, oy1: usize, dst: &mut [T]) {
    let n = (oy1 - oy0) * g.wo;
    let (k, s, pad) = (g.k, g.stride, g.pad);
    for ci in 0..g.cin {
        let plane = &mut dst[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * n..(row + 1) * n];
                let (lo, hi) = g.valid_cols(kx);
                for (r, oy) in (oy0..oy1).enumerate() {
                    let iy = (oy * s + ky) as isize - pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let drow = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let srow = &src[r * g.wo..(r + 1) * g.wo];
                    for (ox, &v) in srow.iter().enumerate().take(hi).skip(lo) {
                        let ix = ox * s + kx - pad;
                        drow[ix] = drow[ix] + v;
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `x` (T×Cin×H×W) with `w` (Cout×Cin×k×k), zero padding
/// `pad` on every side, plus an optional per-output-channel bias.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&[T]>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeom::new(x.shape(), w.shape(), stride, pad)?;
    if let Some(b) = bias {
        if b.len() != g.cout {
            return Err(Error::shape(format!("conv2d: bias has {} entries, need {}", b.len(), g.cout)));
        }
    }
    let batch = x.shape().batch;
    let out_plane = g.ho * g.wo;
    let kk = g.col_rows();
    let mut out = Tensor::zeros(Shape::new(batch, g.cout, g.ho, g.wo));
    let mut col = vec![T::zero(); kk * g.rows_per_band() * g.wo];
    for t in 0..batch {
        let src = x.item(t);
        for (y0, y1) in g.bands() {
            let n = (y1 - y0) * g.wo;
            im2col(src, &g, y0, y1, &mut col);
            gemm(
                g.cout,
                kk,
                n,
                T::one(),
                w.data(),
                MatView::row_major(0, kk),
                &col,
                MatView::row_major(0, n),
                T::zero(),
                out.data_mut(),
                MatView { offset: t * g.cout * out_plane + y0 * g.wo, row_stride: out_plane, col_stride: 1 },
            );
        }
        if let Some(b) = bias {
            for (co, &bv) in b.iter().enumerate() {
                for v in out.plane_mut(t, co) {
                    *v = *v + bv;
                }
            }
        }
    }
    out.check_finite("conv2d")
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Option<Tensor<T>>,
    pub db: Option<Vec<T>>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    has_bias: bool,
    stride: usize,
    pad: usize,
    dy: &Tensor<T>,
    need_dx: bool,
    need_params: bool,
) -> Result<ConvGrads<T>> {
    let g = ConvGeom::new(x.shape(), w.shape(), stride, pad)?;
    let batch = x.shape().batch;
    dy.expect_shape(Shape::new(batch, g.cout, g.ho, g.wo), "conv2d backward")?;
    let out_plane = g.ho * g.wo;
    let kk = g.col_rows();
    let band = g.rows_per_band() * g.wo;
    let mut dx = need_dx.then(|| Tensor::zeros(x.shape()));
    let mut dw = need_params.then(|| Tensor::zeros(w.shape()));
    let mut col = vec![T::zero(); kk * band];
    let mut dcol = if need_dx { vec![T::zero(); kk * band] } else { Vec::new() };

    for t in 0..batch {
        for (y0, y1) in g.bands() {
            let n = (y1 - y0) * g.wo;
            let dy_view =
                MatView { offset: t * g.cout * out_plane + y0 * g.wo, row_stride: out_plane, col_stride: 1 };
            if let Some(dw) = dw.as_mut() {
                im2col(x.item(t), &g, y0, y1, &mut col);
                gemm(
                    g.cout,
                    n,
                    kk,
                    T::one(),
                    dy.data(),
                    dy_view,
                    &col,
                    MatView::transposed(0, n),
                    T::one(),
                    dw.data_mut(),
                    MatView::row_major(0, kk),
                );
            }
            if let Some(dx) = dx.as_mut() {
                gemm(
                    kk,
                    g.cout,
                    n,
                    T::one(),
                    w.data(),
                    MatView::transposed(0, kk),
                    dy.data(),
                    dy_view,
                    T::zero(),
                    &mut dcol,
                    MatView::row_major(0, n),
                );
                let item_len = g.cin * g.h * g.w;
                col2im(&dcol, &g, y0, y1, &mut dx.data_mut()[t * item_len..(t + 1) * item_len]);
            }
        }
    }

    let db = (need_params && has_bias).then(|| {
        (0..g.cout)
            .map(|co| {
                let s: f64 = (0..batch).flat_map(|t| dy.plane(t, co)).map(|v| v.as_f64()).sum();
                T::of(s)
            })
            .collect()
    });
    Ok(ConvGrads { dx, dw, db })
}

/// Nearest-neighbour upsampling by `factor` followed by a 3×3, stride-1,
/// pad-1 convolution.
pub fn upsample_conv<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&[T]>,
    factor: usize,
) -> Result<Tensor<T>> {
    if factor < 2 {
        return Err(Error::invalid(format!("upsample factor must be >= 2, got {factor}")));
    }
    let ws = w.shape();
    if ws.height != 3 || ws.width != 3 {
        return Err(Error::shape(format!("upsample_conv needs a 3x3 kernel, got {ws}")));
    }
    conv2d(&upsample_nearest(x, factor)?, w, bias, 1, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct six-loop cross-correlation.
    fn conv_naive(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], s: usize, p: usize) -> Tensor<f64> {
        let (xs, ws) = (x.shape(), w.shape());
        let k = ws.height;
        let ho = (xs.height + 2 * p - k) / s + 1;
        let wo = (xs.width + 2 * p - k) / s + 1;
        Tensor::from_fn([xs.batch, ws.batch, ho, wo], |[t, co, oy, ox]| {
            let mut acc = b[co];
            for ci in 0..xs.channels {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * s + ky) as isize - p as isize;
                        let ix = (ox * s + kx) as isize - p as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < xs.height && (ix as usize) < xs.width {
                            acc += x.at(t, ci, iy as usize, ix as usize) * w.at(co, ci, ky, kx);
                        }
                    }
                }
            }
            acc
        })
    }

    #[test]
    fn identity_kernel_returns_input() {
        let x = Tensor::<f32>::from_fn([1, 1, 3, 3], |[_, _, y, x]| (y * 3 + x) as f32 * 0.7 - 2.0);
        let w = Tensor::full([1, 1, 1, 1], 1.0f32);
        let out = conv2d(&x, &w, Some(&[0.0]), 1, 0).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn ones_kernel_sums_window() {
        let x = Tensor::full([1, 1, 3, 3], 1.0f32);
        let w = Tensor::full([1, 1, 3, 3], 1.0f32);
        let out = conv2d(&x, &w, Some(&[0.0]), 1, 0).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1, 1, 1));
        assert_eq!(out.data(), &[9.0]);
    }

    #[test]
    fn strided_output_shape() {
        let x = Tensor::<f32>::zeros([1, 1, 4, 4]);
        let w = Tensor::<f32>::zeros([1, 1, 3, 3]);
        let out = conv2d(&x, &w, None, 2, 1).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1, 2, 2));
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let x = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let w = Tensor::<f32>::zeros([1, 3, 3, 3]);
        assert!(matches!(conv2d(&x, &w, None, 1, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(s, p, k, h, w) in &[(1, 1, 3, 7, 5), (2, 1, 3, 8, 8), (2, 1, 4, 9, 6), (1, 3, 7, 6, 6), (1, 0, 4, 8, 8)] {
            let x = Tensor::<f64>::randn([2, 3, h, w], 1.0, &mut rng);
            let wt = Tensor::<f64>::randn([4, 3, k, k], 1.0, &mut rng);
            let b = [0.1, -0.2, 0.3, 0.0];
            let fast = conv2d(&x, &wt, Some(&b), s, p).unwrap();
            let slow = conv_naive(&x, &wt, &b, s, p);
            assert!(fast.max_abs_diff(&slow).unwrap() < 1e-12, "s={s} p={p} k={k}");
        }
    }

    #[test]
    fn banded_im2col_matches_single_band() {
        // Large enough that COL_BUDGET forces several bands.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::<f32>::randn([1, 16, 200, 200], 1.0, &mut rng);
        let w = Tensor::<f32>::randn([2, 16, 3, 3], 0.1, &mut rng);
        let g = ConvGeom::new(x.shape(), w.shape(), 1, 1).unwrap();
        assert!(g.rows_per_band() < g.ho);
        let out = conv2d(&x, &w, None, 1, 1).unwrap();
        let xd = x.cast::<f64>();
        let wd = w.cast::<f64>();
        let slow = conv_naive(&xd, &wd, &[0.0, 0.0], 1, 1);
        assert!(out.cast::<f64>().max_abs_diff(&slow).unwrap() < 1e-4);
    }

    #[test]
    fn upsample_conv_with_center_kernel_replicates_pixels() {
        let x = Tensor::<f32>::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut w = Tensor::<f32>::zeros([1, 1, 3, 3]);
        w.set(0, 0, 1, 1, 1.0);
        let out = upsample_conv(&x, &w, Some(&[0.0]), 2).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 1, 4, 4));
        #[rustfmt::skip]
        let expected = [1.0, 1.0, 2.0, 2.0,
                        1.0, 1.0, 2.0, 2.0,
                        3.0, 3.0, 4.0, 4.0,
                        3.0, 3.0, 4.0, 4.0];
        assert_eq!(out.data(), &expected);
    }

    #[test]
    fn upsample_conv_zero_input_gives_bias() {
        let x = Tensor::<f32>::zeros([1, 2, 3, 3]);
        let w = Tensor::<f32>::full([2, 2, 3, 3], 0.5);
        let out = upsample_conv(&x, &w, Some(&[0.25, -1.0]), 3).unwrap();
        assert_eq!(out.shape(), Shape::new(1, 2, 9, 9));
        assert!(out.plane(0, 0).iter().all(|&v| v == 0.25));
        assert!(out.plane(0, 1).iter().all(|&v| v == -1.0));
        assert!(upsample_conv(&x, &w, None, 1).is_err());
    }
}
