//! RGB rasters, PPM I/O and tensor conversion.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nncore::{reflect_101, Tensor};

/// A large u8 RGB image, row-major, three bytes per pixel.
#[derive(Clone, PartialEq, Eq)]
pub struct Slide {
    width: usize,
    height: usize,
    data: Vec<u8>,
    /// Free-form magnification label such as `10x`.
    pub magnification: String,
}

impl std::fmt::Debug for Slide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Slide({}x{}, {})", self.width, self.height, self.magnification)
    }
}

/// `[0, 255] -> [-1, 1]`.
#[inline]
pub fn u8_to_unit(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

/// Inverse of [`u8_to_unit`] with round-half-away-from-zero, clamped.
#[inline]
pub fn unit_to_u8(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

impl Slide {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape(format!("slide dims must be positive, got {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::shape(format!(
                "{width}x{height} RGB slide needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Slide { width, height, data, magnification: String::new() })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        Slide::new(width, height, rgb.repeat(width * height))
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Slide::new(width, height, data)
    }

    pub fn with_magnification(mut self, tag: impl Into<String>) -> Self {
        self.magnification = tag.into();
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Copy of the `w × h` region at `(x0, y0)`, which must lie inside the slide.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Slide> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h} at ({x0},{y0}) outside {}x{} slide",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let i = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[i..i + w * 3]);
        }
        Slide::new(w, h, data).map(|s| s.with_magnification(self.magnification.clone()))
    }

    /// Whole slide as a `1×3×H×W` tensor in `[-1, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        self.window(0, 0, self.width, self.height).expect("window equals slide")
    }

    /// `w×h` window with top-left corner `(x0, y0)`, which may lie outside the
    /// slide; out-of-bounds pixels are reflect-101 images of slide pixels.
    pub fn window(&self, x0: isize, y0: isize, w: usize, h: usize) -> Result<Tensor> {
        let (sw, sh) = (self.width as isize, self.height as isize);
        if w == 0 || h == 0 || x0 >= sw || y0 >= sh || x0 + w as isize <= 0 || y0 + h as isize <= 0 {
            return Err(Error::invalid(format!(
                "{w}x{h} window at ({x0},{y0}) does not intersect the {}x{} slide",
                self.width, self.height
            )));
        }
        let xs: Vec<usize> = (0..w).map(|i| reflect_101(x0 + i as isize, self.width)).collect();
        let mut data = vec![0.0f32; 3 * w * h];
        for i in 0..h {
            let sy = reflect_101(y0 + i as isize, self.height);
            let row = &self.data[sy * self.width * 3..(sy + 1) * self.width * 3];
            for (j, &sx) in xs.iter().enumerate() {
                for c in 0..3 {
                    data[(c * h + i) * w + j] = u8_to_unit(row[sx * 3 + c]);
                }
            }
        }
        Tensor::new([1, 3, h, w], data)
    }

    /// Converts item 0 of a `N×3×H×W` tensor back to u8.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.channels != 3 || s.batch < 1 {
            return Err(Error::shape(format!("slide tensor must be Nx3xHxW, got {s}")));
        }
        let (w, h) = (s.width, s.height);
        let mut data = vec![0u8; w * h * 3];
        for c in 0..3 {
            for (i, &v) in t.plane(0, c).iter().enumerate() {
                data[i * 3 + c] = unit_to_u8(v);
            }
        }
        Slide::new(w, h, data)
    }

    /// Binary PPM (`P6`, maxval 255). The magnification, when set, goes in a
    /// comment line.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() + 64);
        out.extend_from_slice(b"P6\n");
        if !self.magnification.is_empty() {
            out.extend_from_slice(format!("# magnification {}\n", self.magnification).as_bytes());
        }
        out.extend_from_slice(format!("{} {}\n255\n", self.width, self.height).as_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut magnification = String::new();
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos >= bytes.len() {
                return Err(Error::Format("truncated PPM header".into()));
            }
            if bytes[pos] == b'#' {
                let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |e| pos + e);
                let comment = String::from_utf8_lossy(&bytes[pos + 1..end]);
                if let Some(tag) = comment.trim().strip_prefix("magnification ") {
                    magnification = tag.trim().to_string();
                }
                pos = end;
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P6" {
            return Err(Error::Format(format!("expected P6 PPM, got '{}'", fields[0])));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PPM header field '{s}'")));
        let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(Error::Format(format!("only maxval 255 is supported, got {maxval}")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let need = w.checked_mul(h).and_then(|n| n.checked_mul(3)).ok_or_else(|| Error::Format("PPM too large".into()))?;
        if bytes.len() < pos + need {
            return Err(Error::Format(format!("PPM raster has {} bytes, expected {need}", bytes.len().saturating_sub(pos))));
        }
        let mut s = Slide::new(w, h, bytes[pos..pos + need].to_vec())?;
        s.magnification = magnification;
        Ok(s)
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }

    pub fn load_ppm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Slide::from_ppm(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Mean over RGB channels of the per-channel pixel standard deviation
    /// (u8 scale). Low values indicate washed-out colours.
    pub fn mean_channel_std(&self) -> f64 {
        let n = (self.width * self.height) as f64;
        let mut total = 0.0;
        for c in 0..3 {
            let mean = self.data.iter().skip(c).step_by(3).map(|&v| v as f64).sum::<f64>() / n;
            let var = self.data.iter().skip(c).step_by(3).map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
            total += var.sqrt();
        }
        total / 3.0
    }

    /// Mean absolute u8 difference over the centred crop covering `fraction`
    /// of each dimension.
    pub fn central_mean_abs_diff(&self, other: &Slide, fraction: f64) -> Result<f64> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::shape(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let cw = ((self.width as f64 * fraction).round() as usize).clamp(1, self.width);
        let ch = ((self.height as f64 * fraction).round() as usize).clamp(1, self.height);
        let (x0, y0) = ((self.width - cw) / 2, (self.height - ch) / 2);
        let mut sum = 0u64;
        for y in y0..y0 + ch {
            let a = &self.data[(y * self.width + x0) * 3..(y * self.width + x0 + cw) * 3];
            let b = &other.data[(y * self.width + x0) * 3..(y * self.width + x0 + cw) * 3];
            sum += a.iter().zip(b).map(|(&p, &q)| p.abs_diff(q) as u64).sum::<u64>();
        }
        Ok(sum as f64 / (cw * ch * 3) as f64)
    }
}
