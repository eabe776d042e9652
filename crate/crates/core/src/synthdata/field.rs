//! Smooth random feature fields shared by both domains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const TAU: f64 = std::f64::consts::TAU;

/// Cosine from basic IEEE arithmetic only (range reduction plus a Taylor
/// polynomial), so fields are bit-identical on every platform.
pub fn det_cos(x: f64) -> f64 {
    let r = x - TAU * (x / TAU).round();
    let r2 = r * r;
    // 1 - r²/(1·2) (1 - r²/(3·4) (1 - ... r²/(21·22))).
    let mut acc = 1.0;
    for k in (1..=11).rev() {
        let n = (2 * k) as f64;
        acc = 1.0 - r2 / ((n - 1.0) * n) * acc;
    }
    acc
}

pub fn det_sin(x: f64) -> f64 {
    det_cos(x - TAU / 4.0)
}

/// Number of Fourier components per field.
pub const FIELD_COMPONENTS: usize = 8;
/// Wavelength range of the density waves (pixels). Comparable to the 64 px
/// training tiles, so most tiles hold both tissue and background.
pub const MIN_WAVELENGTH: f64 = 32.0;
pub const MAX_WAVELENGTH: f64 = 128.0;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

/// Unit-variance sum of random plane waves.
#[derive(Clone, Debug, PartialEq)]
struct WaveSum(Vec<Wave>);

impl WaveSum {
    fn random(rng: &mut impl Rng, n: usize) -> Self {
        let mut waves: Vec<Wave> = (0..n)
            .map(|_| {
                let dir = rng.gen_range(0.0..TAU);
                let k = TAU / rng.gen_range(MIN_WAVELENGTH..MAX_WAVELENGTH);
                Wave { kx: k * det_cos(dir), ky: k * det_sin(dir), phase: rng.gen_range(0.0..TAU), amp: rng.gen_range(0.5..1.0) }
            })
            .collect();
        // Each cosine has variance amp²/2; scale the total to 1.
        let var: f64 = waves.iter().map(|w| w.amp * w.amp / 2.0).sum();
        let s = 1.0 / var.sqrt();
        for w in &mut waves {
            w.amp *= s;
        }
        WaveSum(waves)
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.0.iter().map(|w| w.amp * det_cos(w.kx * x + w.ky * y + w.phase)).sum()
    }
}

/// Blob density in `[0, 1]` and fibre orientation (radians) per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureField {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub blob_density: Vec<f32>,
    pub fiber_orientation: Vec<f32>,
}

/// Spread of the density field around its per-field base level.
const DENSITY_GAIN: f64 = 0.25;
/// Range of the per-field base level. Kept well below the epithelium
/// threshold so tissue covers about a third of a slide: with an even
/// tissue/background split the swapped labelling is as realistic as the
/// true one and unpaired training can settle on it.
const BASE_RANGE: std::ops::Range<f64> = 0.18..0.30;
/// Bounds on a field's mean density.
pub const MEAN_DENSITY_RANGE: (f64, f64) = (0.2, 0.6);

fn clamped_mean(base: f64, waves: &[f64]) -> f64 {
    waves.iter().map(|w| (base + DENSITY_GAIN * w).clamp(0.0, 1.0)).sum::<f64>() / waves.len() as f64
}

pub fn gen_feature_field(seed: u64, width: usize, height: usize) -> Result<FeatureField> {
    if width < 64 || height < 64 {
        return Err(Error::invalid(format!("feature fields need at least 64x64, got {width}x{height}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = rng.gen_range(BASE_RANGE);
    let density = WaveSum::random(&mut rng, FIELD_COMPONENTS);
    let theta0 = rng.gen_range(0.0..std::f64::consts::PI);
    let orient = WaveSum::random(&mut rng, FIELD_COMPONENTS);
    let mut waves = Vec::with_capacity(width * height);
    let mut fiber_orientation = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64, y as f64);
            waves.push(density.at(fx, fy));
            fiber_orientation.push((theta0 + 0.6 * orient.at(fx, fy)) as f32);
        }
    }
    // Small fields can average well away from the base level; shift the
    // base until the clamped mean is in range (monotone in the base).
    let (lo, hi) = MEAN_DENSITY_RANGE;
    for _ in 0..32 {
        let m = clamped_mean(base, &waves);
        if m < lo {
            base += lo - m + 1e-3;
        } else if m > hi {
            base -= m - hi + 1e-3;
        } else {
            break;
        }
    }
    let blob_density = waves.iter().map(|w| (base + DENSITY_GAIN * w).clamp(0.0, 1.0) as f32).collect();
    Ok(FeatureField { width, height, seed, blob_density, fiber_orientation })
}

impl FeatureField {
    /// Constant fields, for controlled experiments.
    pub fn constant(width: usize, height: usize, density: f32, orientation: f32) -> Self {
        FeatureField {
            width,
            height,
            seed: 0,
            blob_density: vec![density.clamp(0.0, 1.0); width * height],
            fiber_orientation: vec![orientation; width * height],
        }
    }

    pub fn density(&self, x: usize, y: usize) -> f32 {
        self.blob_density[y * self.width + x]
    }

    pub fn orientation(&self, x: usize, y: usize) -> f32 {
        self.fiber_orientation[y * self.width + x]
    }

    pub fn mean_density(&self) -> f64 {
        self.blob_density.iter().map(|&v| v as f64).sum::<f64>() / self.blob_density.len() as f64
    }

    /// Scales the density by `k` (clamped to `[0, 1]`).
    pub fn scaled(&self, k: f32) -> Self {
        let mut f = self.clone();
        for v in &mut f.blob_density {
            *v = (*v * k).clamp(0.0, 1.0);
        }
        f
    }

    /// Adds `gain` times a second smooth field drawn from `seed` to the density.
    pub(crate) fn perturbed(&self, seed: u64, gain: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = WaveSum::random(&mut rng, FIELD_COMPONENTS);
        let mut f = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                f.blob_density[i] = (f.blob_density[i] as f64 + gain * hidden.at(x as f64, y as f64)).clamp(0.0, 1.0) as f32;
            }
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn det_cos_matches_libm() {
        for i in -2000..2000 {
            let x = i as f64 * 0.0173;
            assert!((det_cos(x) - x.cos()).abs() < 1e-9, "{x}");
            assert!((det_sin(x) - x.sin()).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn seeded_and_reproducible() {
        let a = gen_feature_field(5, 64, 80).unwrap();
        assert_eq!(a, gen_feature_field(5, 64, 80).unwrap());
        let b = gen_feature_field(6, 64, 80).unwrap();
        let diff = a.blob_density.iter().zip(&b.blob_density).map(|(p, q)| (p - q).abs()).fold(0.0, f32::max);
        assert!(diff > 0.01);
        assert!(gen_feature_field(1, 63, 64).is_err());
    }

    #[test]
    fn values_in_range_and_mean_plausible() {
        for seed in 0..20 {
            let f = gen_feature_field(seed, 256, 256).unwrap();
            assert!(f.blob_density.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(f.fiber_orientation.iter().all(|v| v.is_finite()));
            let m = f.mean_density();
            assert!((MEAN_DENSITY_RANGE.0..=MEAN_DENSITY_RANGE.1).contains(&m), "seed {seed}: {m}");
        }
    }
}
