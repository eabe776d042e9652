//! Fixed per-layer normalization statistics for global-statistics inference.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nncore::{ChannelStats, Model, Tensor};

/// One [`ChannelStats`] (batch 1) per instance-norm layer, in model order.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStatsTable {
    layers: Vec<ChannelStats>,
}

impl LayerStatsTable {
    pub fn new(layers: Vec<ChannelStats>) -> Result<Self> {
        if let Some(l) = layers.iter().find(|l| l.batch() != 1) {
            return Err(Error::shape(format!("stats table layers must have batch 1, got {}", l.batch())));
        }
        Ok(LayerStatsTable { layers })
    }

    pub fn layers(&self) -> &[ChannelStats] {
        &self.layers
    }

    /// Fails unless the table has one entry per norm layer of `model` with
    /// matching channel counts.
    pub fn check_model(&self, model: &Model) -> Result<()> {
        let channels = model.norm_channels();
        if channels.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "stats table has {} layers, model has {} norm layers",
                self.layers.len(),
                channels.len()
            )));
        }
        for (i, (l, &c)) in self.layers.iter().zip(&channels).enumerate() {
            if l.channels() != c {
                return Err(Error::shape(format!("stats layer {i} has {} channels, model expects {c}", l.channels())));
            }
        }
        Ok(())
    }

    /// CSV with columns `layer,channel,mean,var`. Values use shortest
    /// round-trip formatting, so parsing restores them exactly.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,channel,mean,var\n");
        for (li, l) in self.layers.iter().enumerate() {
            for c in 0..l.channels() {
                let _ = writeln!(s, "{li},{c},{},{}", l.mean(0, c), l.var(0, c));
            }
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<(usize, usize, f64, f64)> = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Format(format!("stats table line {}: '{line}'", i + 1));
            if f.len() != 4 {
                return Err(bad());
            }
            rows.push((
                f[0].parse().map_err(|_| bad())?,
                f[1].parse().map_err(|_| bad())?,
                f[2].parse().map_err(|_| bad())?,
                f[3].parse().map_err(|_| bad())?,
            ));
        }
        let n_layers = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let mut layers = Vec::with_capacity(n_layers);
        for li in 0..n_layers {
            let mut entries: Vec<_> = rows.iter().filter(|r| r.0 == li).collect();
            entries.sort_by_key(|r| r.1);
            if entries.iter().enumerate().any(|(c, r)| r.1 != c) || entries.is_empty() {
                return Err(Error::Format(format!("stats table layer {li} has missing or duplicate channels")));
            }
            layers.push(ChannelStats::per_channel(
                entries.iter().map(|r| r.2).collect(),
                entries.iter().map(|r| r.3).collect(),
            )?);
        }
        LayerStatsTable::new(layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Forwards every tile (each batch item counts as one tile) and pools the
/// per-tile instance statistics of each norm layer: the table mean is the
/// mean of tile means, the table variance is the mean of `var + mean²` minus
/// the squared table mean.
pub fn collect_running_stats(model: &Model, tiles: &[Tensor]) -> Result<LayerStatsTable> {
    let channels = model.norm_channels();
    let mut sum_m: Vec<Vec<f64>> = channels.iter().map(|&c| vec![0.0; c]).collect();
    let mut sum_sq: Vec<Vec<f64>> = sum_m.clone();
    let mut n = 0usize;
    for tile in tiles {
        let mut rec = Vec::with_capacity(channels.len());
        model.forward_with(tile, None, Some(&mut rec))?;
        for (li, st) in rec.iter().enumerate() {
            for t in 0..st.batch() {
                for c in 0..st.channels() {
                    let (m, v) = (st.mean(t, c), st.var(t, c));
                    sum_m[li][c] += m;
                    sum_sq[li][c] += v + m * m;
                }
            }
        }
        n += tile.shape().batch;
    }
    if n == 0 {
        return Err(Error::Empty("collect_running_stats tiles"));
    }
    let nf = n as f64;
    let layers = sum_m
        .iter()
        .zip(&sum_sq)
        .map(|(m, s)| {
            let mean: Vec<f64> = m.iter().map(|v| v / nf).collect();
            let var = s.iter().zip(&mean).map(|(s, mu)| (s / nf - mu * mu).max(0.0)).collect();
            ChannelStats::per_channel(mean, var)
        })
        .collect::<Result<Vec<_>>>()?;
    LayerStatsTable::new(layers)
}
