//! Per-pair density reports, CSV round trip and SVG boxplots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::stain::{abs_rel_diff, density, stain_mask, StainRef};
use super::stats::{aggregate, box_stats, AggregateStats, BoxStats};
use crate::error::{Error, Result};
use crate::tiling::Slide;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityRow {
    pub pair_id: String,
    pub stain: String,
    pub density_real: f64,
    pub density_virtual: f64,
    /// `+∞` marks a pair whose real density is zero but virtual is not.
    pub abs_rel_diff: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensityReport {
    pub rows: Vec<DensityRow>,
}

pub const REPORT_HEADER: &str = "pair_id,stain,density_real,density_virtual,abs_rel_diff";

/// One row per stain for a real/virtual slide pair.
pub fn evaluate_pair(pair_id: &str, real: &Slide, virt: &Slide, stains: &[StainRef]) -> Result<Vec<DensityRow>> {
    if (real.width(), real.height()) != (virt.width(), virt.height()) {
        return Err(Error::shape(format!(
            "pair {pair_id}: real {}x{} vs virtual {}x{}",
            real.width(),
            real.height(),
            virt.width(),
            virt.height()
        )));
    }
    stains
        .iter()
        .map(|s| {
            let dr = density(&stain_mask(real, s))?;
            let dv = density(&stain_mask(virt, s))?;
            Ok(DensityRow {
                pair_id: pair_id.to_string(),
                stain: s.name.clone(),
                density_real: dr,
                density_virtual: dv,
                abs_rel_diff: abs_rel_diff(dr, dv),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StainSummary {
    pub stain: String,
    /// `None` when every pair of this stain was an outlier.
    pub stats: Option<AggregateStats>,
    /// Rows excluded because their relative difference is infinite.
    pub outliers: usize,
}

impl DensityReport {
    /// Stain names in order of first appearance.
    pub fn stains(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.stain) {
                out.push(r.stain.clone());
            }
        }
        out
    }

    pub fn diffs(&self, stain: &str) -> Vec<f64> {
        self.rows.iter().filter(|r| r.stain == stain).map(|r| r.abs_rel_diff).collect()
    }

    pub fn summarize(&self) -> Result<Vec<StainSummary>> {
        if self.rows.is_empty() {
            return Err(Error::Empty("density report"));
        }
        self.stains()
            .into_iter()
            .map(|stain| {
                let all = self.diffs(&stain);
                let finite: Vec<f64> = all.iter().copied().filter(|v| v.is_finite()).collect();
                let stats = if finite.is_empty() { None } else { Some(aggregate(&finite)?) };
                Ok(StainSummary { outliers: all.len() - finite.len(), stain, stats })
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.pair_id, r.stain, r.density_real, r.density_virtual, r.abs_rel_diff
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(REPORT_HEADER) {
            return Err(Error::Format(format!("density report must start with '{REPORT_HEADER}'")));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Format(format!("density report line {}: '{line}'", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad());
            }
            rows.push(DensityRow {
                pair_id: f[0].to_string(),
                stain: f[1].to_string(),
                density_real: f[2].parse().map_err(|_| bad())?,
                density_virtual: f[3].parse().map_err(|_| bad())?,
                abs_rel_diff: f[4].parse().map_err(|_| bad())?,
            });
        }
        Ok(DensityReport { rows })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Flat `key value` lines: per stain median, variance, n and outliers.
    pub fn summary_text(&self) -> Result<String> {
        let mut s = String::new();
        for st in self.summarize()? {
            let name = &st.stain;
            match st.stats {
                Some(a) => {
                    let _ = writeln!(s, "{name}.median {}", a.median);
                    let _ = writeln!(s, "{name}.variance_sample {}", a.variance);
                    let _ = writeln!(s, "{name}.n {}", a.n);
                }
                None => {
                    let _ = writeln!(s, "{name}.n 0");
                }
            }
            let _ = writeln!(s, "{name}.outliers {}", st.outliers);
        }
        Ok(s)
    }
}

const SVG_W: f64 = 480.0;
const SVG_H: f64 = 360.0;
const MARGIN: f64 = 48.0;

/// Standalone SVG with one box per stain.
pub fn boxplot_svg(report: &DensityReport) -> Result<String> {
    let boxes: Vec<(String, BoxStats)> = report
        .stains()
        .into_iter()
        .filter_map(|s| {
            let finite: Vec<f64> = report.diffs(&s).into_iter().filter(|v| v.is_finite()).collect();
            (!finite.is_empty()).then(|| box_stats(&finite).map(|b| (s, b)))
        })
        .collect::<Result<_>>()?;
    if boxes.is_empty() {
        return Err(Error::Empty("boxplot data"));
    }
    let top = boxes
        .iter()
        .flat_map(|(_, b)| b.outliers.iter().copied().chain([b.whisker_hi]))
        .fold(0.0f64, f64::max);
    let top = if top > 0.0 { top * 1.05 } else { 1.0 };
    let plot_h = SVG_H - 2.0 * MARGIN;
    let y = |v: f64| SVG_H - MARGIN - v / top * plot_h;
    let slot = (SVG_W - 2.0 * MARGIN) / boxes.len() as f64;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(
        s,
        "<metadata>absolute relative difference per stain; quartiles by linear interpolation at q(n-1); \
         whiskers to the most extreme values within 1.5 IQR; circles are Tukey outliers; \
         infinite differences excluded</metadata>"
    );
    let _ = writeln!(s, r#"<rect width="{SVG_W}" height="{SVG_H}" fill="white"/>"#);
    let axis_x = MARGIN;
    let _ = writeln!(
        s,
        r#"<line x1="{axis_x}" y1="{:.2}" x2="{axis_x}" y2="{:.2}" stroke="black"/>"#,
        y(0.0),
        y(top)
    );
    for k in 0..=4 {
        let v = top * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{v:.3}</text>"#,
            axis_x - 4.0,
            y(v) + 3.0
        );
    }
    for (i, (name, b)) in boxes.iter().enumerate() {
        let cx = MARGIN + slot * (i as f64 + 0.5);
        let half = slot * 0.2;
        let _ = writeln!(s, r#"<g id="box-{name}">"#);
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(b.whisker_lo),
            y(b.q1)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(b.q3),
            y(b.whisker_hi)
        );
        for v in [b.whisker_lo, b.whisker_hi] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
                cx - half / 2.0,
                y(v),
                cx + half / 2.0,
                y(v)
            );
        }
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#dde4f0" stroke="black"/>"##,
            cx - half,
            y(b.q3),
            2.0 * half,
            y(b.q1) - y(b.q3)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(b.median),
            cx + half,
            y(b.median)
        );
        for o in &b.outliers {
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="3" fill="none" stroke="black"/>"#, y(*o));
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" font-size="12" text-anchor="middle">{name}</text>"#,
            SVG_H - MARGIN + 16.0
        );
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

pub fn emit_boxplot_svg(report: &DensityReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, boxplot_svg(report)?).map_err(|e| Error::io(path, e))
}
