//! Color-threshold stain masks and densities.

use crate::error::{Error, Result};
use crate::tiling::Slide;

pub const DEFAULT_STAIN_TOL: f64 = 60.0;
/// Largest possible Euclidean RGB distance.
pub const MAX_RGB_DISTANCE: f64 = 441.672_955_930_063_7;

#[derive(Clone, Debug, PartialEq)]
pub struct StainRef {
    pub name: String,
    pub ref_color: [u8; 3],
    /// Euclidean RGB distance threshold (inclusive).
    pub tol: f64,
}

impl StainRef {
    pub fn new(name: impl Into<String>, ref_color: [u8; 3], tol: f64) -> Result<Self> {
        // Zero is allowed and selects exact matches.
        if !(0.0..MAX_RGB_DISTANCE).contains(&tol) {
            return Err(Error::invalid(format!("stain tolerance must be in [0, {MAX_RGB_DISTANCE:.1}), got {tol}")));
        }
        let name = name.into();
        if name.is_empty() || name.contains([',', '\n']) {
            return Err(Error::invalid(format!("bad stain name '{name}'")));
        }
        Ok(StainRef { name, ref_color, tol })
    }

    pub fn purple() -> Self {
        StainRef::new("purple", [128, 0, 128], DEFAULT_STAIN_TOL).expect("valid default")
    }

    pub fn brown() -> Self {
        StainRef::new("brown", [150, 90, 30], DEFAULT_STAIN_TOL).expect("valid default")
    }

    /// Purple (fibers) and brown (epithelium).
    pub fn defaults() -> Vec<StainRef> {
        vec![StainRef::purple(), StainRef::brown()]
    }

    pub fn matches(&self, rgb: [u8; 3]) -> bool {
        let d2: i32 = (0..3).map(|c| (rgb[c] as i32 - self.ref_color[c] as i32).pow(2)).sum();
        d2 as f64 <= self.tol * self.tol
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::shape(format!("{width}x{height} mask needs {} bits, got {}", width * height, bits.len())));
        }
        Ok(Mask { width, height, bits })
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Mask {
        Mask { width: self.width, height: self.height, bits: self.bits.iter().map(|b| !b).collect() }
    }
}

pub fn stain_mask(slide: &Slide, stain: &StainRef) -> Mask {
    Mask { width: slide.width(), height: slide.height(), bits: slide.pixels().map(|p| stain.matches(p)).collect() }
}

/// Fraction of set pixels.
pub fn density(mask: &Mask) -> Result<f64> {
    if mask.bits.is_empty() {
        return Err(Error::Empty("density mask"));
    }
    Ok(mask.count() as f64 / mask.bits.len() as f64)
}

/// `|real − virt| / real`; `0` when both are zero and `+∞` (an outlier that
/// aggregation skips) when only `real` is zero.
pub fn abs_rel_diff(real: f64, virt: f64) -> f64 {
    if real == 0.0 {
        if virt == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (real - virt).abs() / real
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks() {
        let p = StainRef::purple();
        let s = Slide::filled(4, 3, [128, 0, 128]).unwrap();
        assert_eq!(density(&stain_mask(&s, &p)).unwrap(), 1.0);
        // Distance ≈ 290 from the A background.
        let bg = Slide::filled(4, 3, [235, 230, 240]).unwrap();
        assert_eq!(density(&stain_mask(&bg, &p)).unwrap(), 0.0);
        let exact = StainRef::new("x", [10, 10, 10], 0.0).unwrap();
        assert!(exact.matches([10, 10, 10]) && !exact.matches([10, 10, 11]));
        assert!(StainRef::new("x", [0; 3], 500.0).is_err());
    }

    #[test]
    fn density_and_complement() {
        let bits = (0..100).map(|i| i < 25).collect();
        let m = Mask::new(10, 10, bits).unwrap();
        assert_eq!(density(&m).unwrap(), 0.25);
        assert_eq!(density(&m.complement()).unwrap(), 0.75);
        assert!(density(&Mask::new(0, 0, vec![]).unwrap()).is_err());
    }

    #[test]
    fn rel_diff_cases() {
        assert!((abs_rel_diff(0.10, 0.08) - 0.2).abs() < 1e-12);
        assert_eq!(abs_rel_diff(0.3, 0.3), 0.0);
        assert_eq!(abs_rel_diff(0.0, 0.0), 0.0);
        assert_eq!(abs_rel_diff(0.0, 0.1), f64::INFINITY);
    }
}
