//! Instance normalization: per-image, per-channel standardization.

use super::scalar::Scalar;
use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

/// Default variance floor.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Per-(item, channel) mean and population variance.
///
/// A table with `batch == 1` broadcasts across every item when used as an
/// override.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats {
    batch: usize,
    channels: usize,
    mean: Vec<f64>,
    var: Vec<f64>,
    count: usize,
}

impl ChannelStats {
    pub fn new(batch: usize, channels: usize, mean: Vec<f64>, var: Vec<f64>, count: usize) -> Result<Self> {
        if mean.len() != batch * channels || var.len() != batch * channels {
            return Err(Error::shape(format!(
                "channel stats for {batch}x{channels} need {} entries",
                batch * channels
            )));
        }
        if let Some(v) = var.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("variance must be finite and >= 0, got {v}")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("channel stats"));
        }
        Ok(ChannelStats { batch, channels, mean, var, count })
    }

    /// Single-item stats from per-channel means and variances.
    pub fn per_channel(mean: Vec<f64>, var: Vec<f64>) -> Result<Self> {
        let c = mean.len();
        Self::new(1, c, mean, var, 0)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Pixels per channel plane of the source tensor (0 for synthetic tables).
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self, t: usize, c: usize) -> f64 {
        self.mean[t * self.channels + c]
    }

    pub fn var(&self, t: usize, c: usize) -> f64 {
        self.var[t * self.channels + c]
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    pub fn vars(&self) -> &[f64] {
        &self.var
    }

    fn lookup(&self, t: usize, c: usize) -> (f64, f64) {
        let t = if self.batch == 1 { 0 } else { t };
        (self.mean(t, c), self.var(t, c))
    }
}

/// Mean and population variance of every (t, i) channel plane.
pub fn instance_norm_stats<T: Scalar>(x: &Tensor<T>) -> Result<ChannelStats> {
    let s = x.shape();
    let n = s.plane();
    if n == 0 {
        return Err(Error::shape(format!("instance norm needs H*W >= 1, got {s}")));
    }
    let mut mean = Vec::with_capacity(s.batch * s.channels);
    let mut var = Vec::with_capacity(s.batch * s.channels);
    for t in 0..s.batch {
        for c in 0..s.channels {
            let (m, v) = plane_moments(x.plane(t, c));
            mean.push(m);
            var.push(v);
        }
    }
    ChannelStats::new(s.batch, s.channels, mean, var, n)
}

fn plane_moments<T: Scalar>(plane: &[T]) -> (f64, f64) {
    let n = plane.len() as f64;
    let m = plane.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let v = plane
        .iter()
        .map(|v| {
            let d = v.as_f64() - m;
            d * d
        })
        .sum::<f64>()
        / n;
    (m, v)
}

/// Output of a normalization pass together with what backward needs.
pub(crate) struct NormForward<T> {
    pub output: Tensor<T>,
    /// `1 / sqrt(var + eps)` per (t, c) plane.
    pub inv_std: Vec<f64>,
    /// Statistics of the input itself (not the override).
    pub input_stats: ChannelStats,
}

pub(crate) fn instance_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    eps: f64,
    stats_override: Option<&ChannelStats>,
) -> Result<NormForward<T>> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid(format!("instance norm eps must be > 0, got {eps}")));
    }
    let s = x.shape();
    if let Some(o) = stats_override {
        if o.channels() != s.channels || (o.batch() != 1 && o.batch() != s.batch) {
            return Err(Error::shape(format!(
                "stats override is {}x{}, input is {s}",
                o.batch(),
                o.channels()
            )));
        }
    }
    let input_stats = instance_norm_stats(x)?;
    let mut output = Tensor::zeros(s);
    let mut inv_std = Vec::with_capacity(s.batch * s.channels);
    for t in 0..s.batch {
        for c in 0..s.channels {
            let (m, v) = match stats_override {
                Some(o) => o.lookup(t, c),
                None => (input_stats.mean(t, c), input_stats.var(t, c)),
            };
            let r = 1.0 / (v + eps).sqrt();
            inv_std.push(r);
            let (mt, rt) = (T::of(m), T::of(r));
            for (o, &xv) in output.plane_mut(t, c).iter_mut().zip(x.plane(t, c)) {
                *o = (xv - mt) * rt;
            }
        }
    }
    Ok(NormForward { output: output.check_finite("instance_norm")?, inv_std, input_stats })
}

/// `y = (x - mean) / sqrt(var + eps)` per channel plane. Statistics come from
/// `x` itself unless `stats_override` supplies them.
pub fn instance_norm<T: Scalar>(
    x: &Tensor<T>,
    eps: f64,
    stats_override: Option<&ChannelStats>,
) -> Result<Tensor<T>> {
    instance_norm_forward(x, eps, stats_override).map(|f| f.output)
}

/// Gradient of instance norm. Without an override the statistics depend on
/// the input; with one they are constants.
pub(crate) fn instance_norm_backward<T: Scalar>(
    y: &Tensor<T>,
    dy: &Tensor<T>,
    inv_std: &[f64],
    overridden: bool,
) -> Tensor<T> {
    let s: Shape = y.shape();
    let n = s.plane() as f64;
    let mut dx = Tensor::zeros(s);
    for t in 0..s.batch {
        for c in 0..s.channels {
            let r = inv_std[t * s.channels + c];
            let g = dy.plane(t, c);
            let out = dx.plane_mut(t, c);
            if overridden {
                let rt = T::of(r);
                for (o, &gv) in out.iter_mut().zip(g) {
                    *o = gv * rt;
                }
                continue;
            }
            let yp = y.plane(t, c);
            let sum_g: f64 = g.iter().map(|v| v.as_f64()).sum();
            let sum_gy: f64 = g.iter().zip(yp).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
            let (a, b) = (sum_g / n, sum_gy / n);
            for ((o, &gv), &yv) in out.iter_mut().zip(g).zip(yp) {
                *o = T::of(r * (gv.as_f64() - a - yv.as_f64() * b));
            }
        }
    }
    dx
}
