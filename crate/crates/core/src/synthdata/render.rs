//! Rasterizing the two domains from a shared feature field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::field::{det_cos, det_sin, FeatureField};
use crate::error::{Error, Result};
use crate::tiling::Slide;

pub type Rgb = [u8; 3];

/// Palettes and geometry for both domains.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainParams {
    pub a_background: Rgb,
    /// Stroma tint where density exceeds `a_tint_threshold`.
    pub a_tint: Rgb,
    pub a_dense_tint: Rgb,
    pub a_tint_threshold: f32,
    pub a_dense_threshold: f32,
    pub nucleus: Rgb,
    pub marker: Rgb,
    /// Probability that a nucleus takes the marker color.
    pub marker_fraction: f64,
    /// Semi-major axis range in pixels; the minor axis is 0.6 of it.
    pub blob_radius: (f64, f64),
    pub b_background: Rgb,
    pub fiber: Rgb,
    pub epithelium: Rgb,
    pub fiber_threshold: f32,
    pub epithelium_threshold: f32,
    pub fiber_length: (f64, f64),
    pub fiber_half_width: f64,
    /// Per-channel uniform noise amplitude for domains A and B.
    pub a_noise: i32,
    pub b_noise: i32,
    /// Gain of an extra density field that only domain B sees. Zero disables it.
    pub hidden_gain: f64,
}

impl Default for DomainParams {
    fn default() -> Self {
        DomainParams {
            a_background: [235, 230, 240],
            a_tint: [212, 192, 228],
            a_dense_tint: [192, 168, 218],
            a_tint_threshold: 0.35,
            a_dense_threshold: 0.5,
            nucleus: [80, 40, 130],
            marker: [200, 110, 60],
            marker_fraction: 0.2,
            blob_radius: (2.0, 4.0),
            b_background: [240, 235, 195],
            fiber: [128, 0, 128],
            epithelium: [150, 90, 30],
            fiber_threshold: 0.5,
            epithelium_threshold: 0.35,
            fiber_length: (20.0, 28.0),
            fiber_half_width: 2.0,
            a_noise: 12,
            b_noise: 8,
            hidden_gain: 0.0,
        }
    }
}

/// Minimum per-channel (Chebyshev) distance between any A and any B color.
pub const MIN_PALETTE_DISTANCE: u8 = 40;

const NUCLEUS_CELL: usize = 8;
const FIBER_CELL: usize = 16;

fn chebyshev(p: Rgb, q: Rgb) -> u8 {
    (0..3).map(|c| p[c].abs_diff(q[c])).max().unwrap_or(0)
}

impl DomainParams {
    pub fn palette_a(&self) -> [Rgb; 5] {
        [self.a_background, self.a_tint, self.a_dense_tint, self.nucleus, self.marker]
    }

    pub fn palette_b(&self) -> [Rgb; 3] {
        [self.b_background, self.fiber, self.epithelium]
    }

    pub fn validate(&self) -> Result<()> {
        for a in self.palette_a() {
            for b in self.palette_b() {
                if chebyshev(a, b) < MIN_PALETTE_DISTANCE {
                    return Err(Error::invalid(format!(
                        "palette colors {a:?} (A) and {b:?} (B) are closer than {MIN_PALETTE_DISTANCE}"
                    )));
                }
            }
        }
        let (r0, r1) = self.blob_radius;
        let (l0, l1) = self.fiber_length;
        if !(r0 > 0.0 && r0 <= r1 && l0 > 0.0 && l0 <= l1 && self.fiber_half_width > 0.0) {
            return Err(Error::invalid("blob radius and fiber geometry must be positive, non-empty ranges"));
        }
        if !(0.0..=1.0).contains(&self.marker_fraction) || self.a_noise < 0 || self.b_noise < 0 {
            return Err(Error::invalid("marker fraction must be in [0, 1] and noise non-negative"));
        }
        if self.hidden_gain.is_nan() || self.hidden_gain < 0.0 {
            return Err(Error::invalid("hidden gain must be non-negative"));
        }
        Ok(())
    }
}

fn noisy(rgb: Rgb, rng: &mut ChaCha8Rng, amp: i32) -> Rgb {
    if amp == 0 {
        return rgb;
    }
    rgb.map(|v| (v as i32 + rng.gen_range(-amp..=amp)).clamp(0, 255) as u8)
}

const SALT_A: u64 = 0x6e75_636c_6569;
const SALT_B: u64 = 0x6669_6272_6573;
const SALT_HIDDEN: u64 = 0x6869_6464_656e;

pub fn render_domain_a(field: &FeatureField, params: &DomainParams) -> Slide {
    render_domain_a_counted(field, params).0
}

/// Domain A plus the number of nuclei drawn. Each 8×8 cell holds one
/// nucleus with probability equal to the density at its center, so the
/// expected count is linear in the density field.
pub fn render_domain_a_counted(field: &FeatureField, p: &DomainParams) -> (Slide, usize) {
    let (w, h) = (field.width, field.height);
    let mut label = vec![0u8; w * h];
    for (i, &d) in field.blob_density.iter().enumerate() {
        label[i] = if d > p.a_dense_threshold {
            2
        } else if d > p.a_tint_threshold {
            1
        } else {
            0
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(field.seed ^ SALT_A);
    let mut count = 0;
    for cy in (0..h).step_by(NUCLEUS_CELL) {
        for cx in (0..w).step_by(NUCLEUS_CELL) {
            // Fixed number of draws per cell keeps later cells independent of
            // earlier outcomes.
            let u: f32 = rng.gen();
            let jx: f64 = rng.gen();
            let jy: f64 = rng.gen();
            let a = rng.gen_range(p.blob_radius.0..=p.blob_radius.1);
            let tilt = rng.gen_range(-0.3..0.3);
            let marked = rng.gen_bool(p.marker_fraction);
            let mx = (cx + NUCLEUS_CELL / 2).min(w - 1);
            let my = (cy + NUCLEUS_CELL / 2).min(h - 1);
            if u >= field.density(mx, my) {
                continue;
            }
            count += 1;
            let x0 = cx as f64 + jx * NUCLEUS_CELL as f64;
            let y0 = cy as f64 + jy * NUCLEUS_CELL as f64;
            let theta = field.orientation(mx, my) as f64 + tilt;
            let tag = if marked { 4 } else { 3 };
            fill_ellipse(&mut label, w, h, x0, y0, a, 0.6 * a, theta, tag);
        }
    }
    let colors = p.palette_a();
    let mut noise = ChaCha8Rng::seed_from_u64(field.seed ^ SALT_A ^ 1);
    let mut i = 0;
    let slide = Slide::from_fn(w, h, |_, _| {
        let c = noisy(colors[label[i] as usize], &mut noise, p.a_noise);
        i += 1;
        c
    })
    .expect("field dims are positive");
    (slide, count)
}

#[allow(clippy::too_many_arguments)]
fn fill_ellipse(label: &mut [u8], w: usize, h: usize, x0: f64, y0: f64, a: f64, b: f64, theta: f64, tag: u8) {
    let (c, s) = (det_cos(theta), det_sin(theta));
    let xr = (x0 - a).floor().max(0.0) as usize..((x0 + a).ceil() as usize + 1).min(w);
    for y in (y0 - a).floor().max(0.0) as usize..((y0 + a).ceil() as usize + 1).min(h) {
        for x in xr.clone() {
            let (dx, dy) = (x as f64 + 0.5 - x0, y as f64 + 0.5 - y0);
            let u = (dx * c + dy * s) / a;
            let v = (-dx * s + dy * c) / b;
            if u * u + v * v <= 1.0 {
                label[y * w + x] = tag;
            }
        }
    }
}

/// Domain B and its purple pixel fraction.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainB {
    pub slide: Slide,
    pub fiber_mask: Vec<bool>,
    pub true_density: f64,
}

/// Brown epithelium where density exceeds the epithelium threshold, purple
/// fiber segments along the local orientation in 16×16 cells whose center
/// exceeds the fiber threshold (clipped to pixels above it).
pub fn render_domain_b(field: &FeatureField, p: &DomainParams) -> DomainB {
    let hidden;
    let field = if p.hidden_gain > 0.0 {
        hidden = field.perturbed(field.seed ^ SALT_HIDDEN, p.hidden_gain);
        &hidden
    } else {
        field
    };
    let (w, h) = (field.width, field.height);
    let mut fiber_mask = vec![false; w * h];
    let mut rng = ChaCha8Rng::seed_from_u64(field.seed ^ SALT_B);
    let hw = p.fiber_half_width;
    for cy in (0..h).step_by(FIBER_CELL) {
        for cx in (0..w).step_by(FIBER_CELL) {
            let jx: f64 = rng.gen();
            let jy: f64 = rng.gen();
            let len = rng.gen_range(p.fiber_length.0..=p.fiber_length.1);
            let tilt = rng.gen_range(-0.2..0.2);
            let x0 = cx as f64 + (0.25 + 0.5 * jx) * FIBER_CELL as f64;
            let y0 = cy as f64 + (0.25 + 0.5 * jy) * FIBER_CELL as f64;
            let (mx, my) = ((x0 as usize).min(w - 1), (y0 as usize).min(h - 1));
            if field.density(mx, my) <= p.fiber_threshold {
                continue;
            }
            let theta = field.orientation(mx, my) as f64 + tilt;
            let (c, s) = (det_cos(theta), det_sin(theta));
            let half = len / 2.0;
            let reach = half + hw;
            let ys = (y0 - reach).floor().max(0.0) as usize..((y0 + reach).ceil() as usize + 1).min(h);
            let xs = (x0 - reach).floor().max(0.0) as usize..((x0 + reach).ceil() as usize + 1).min(w);
            for y in ys {
                for x in xs.clone() {
                    let (dx, dy) = (x as f64 + 0.5 - x0, y as f64 + 0.5 - y0);
                    let along = (dx * c + dy * s).clamp(-half, half);
                    let (ex, ey) = (dx - along * c, dy - along * s);
                    if ex * ex + ey * ey <= hw * hw && field.density(x, y) > p.fiber_threshold {
                        fiber_mask[y * w + x] = true;
                    }
                }
            }
        }
    }
    let mut noise = ChaCha8Rng::seed_from_u64(field.seed ^ SALT_B ^ 1);
    let mut i = 0;
    let slide = Slide::from_fn(w, h, |_, _| {
        let base = if fiber_mask[i] {
            p.fiber
        } else if field.blob_density[i] > p.epithelium_threshold {
            p.epithelium
        } else {
            p.b_background
        };
        i += 1;
        noisy(base, &mut noise, p.b_noise)
    })
    .expect("field dims are positive");
    let true_density = fiber_mask.iter().filter(|&&m| m).count() as f64 / (w * h) as f64;
    DomainB { slide, fiber_mask, true_density }
}
