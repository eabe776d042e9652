//! Median, sample variance and boxplot quantiles.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregateStats {
    pub median: f64,
    /// Sample variance (n − 1 denominator); zero for a single value.
    pub variance: f64,
    pub n: usize,
}

fn sorted_finite(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("aggregate input"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("aggregate input"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Statistics of the sorted values; sums run in sorted order so the result
/// does not depend on input order.
pub fn aggregate(values: &[f64]) -> Result<AggregateStats> {
    let v = sorted_finite(values)?;
    let n = v.len();
    let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
    let variance = if n == 1 {
        0.0
    } else {
        let mean = v.iter().sum::<f64>() / n as f64;
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
    };
    Ok(AggregateStats { median, variance, n })
}

/// Quantile of sorted data by linear interpolation between order
/// statistics at position `q · (n − 1)`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Five-number summary with Tukey fences: whiskers reach the most extreme
/// values within 1.5·IQR of the box; values beyond are outliers.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    let v = sorted_finite(values)?;
    let (q1, median, q3) = (quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| (lo_fence..=hi_fence).contains(x)).collect();
    let outliers = v.iter().copied().filter(|x| !(lo_fence..=hi_fence).contains(x)).collect();
    Ok(BoxStats {
        q1,
        median,
        q3,
        whisker_lo: inside.first().copied().unwrap_or(q1),
        whisker_hi: inside.last().copied().unwrap_or(q3),
        outliers,
    })
}
