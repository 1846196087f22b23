//! Five-number box-plot summaries.
//!
//! Quartiles use linear interpolation between order statistics (type 7):
//! for probability `p` over sorted `x[0..n]`, `h = (n - 1) p` and
//! `q = x[⌊h⌋] + (h - ⌊h⌋) (x[⌊h⌋ + 1] - x[⌊h⌋])`. Whiskers follow Tukey's
//! 1.5 × IQR fences.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("no samples to summarize")]
    EmptyInput,
    #[error("sample {0} is not a finite number")]
    NonFinite(usize),
}

/// Type-7 quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    match sorted.get(lo + 1) {
        Some(&hi) if frac > 0.0 => sorted[lo] + frac * (hi - sorted[lo]),
        _ => sorted[lo],
    }
}

pub fn summarize(samples: &[f64]) -> Result<BoxStats, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&x, 0.25);
    let median = quantile_sorted(&x, 0.5);
    let q3 = quantile_sorted(&x, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = |v: &&f64| **v >= lo_fence && **v <= hi_fence;
    // The median always lies inside the fences, so both exist.
    let whisker_low = *x.iter().find(inside).expect("median inside fences");
    let whisker_high = *x.iter().rev().find(inside).expect("median inside fences");
    let outliers = x.iter().copied().filter(|v| *v < lo_fence || *v > hi_fence).collect();
    Ok(BoxStats {
        n: x.len(),
        mean: x.iter().sum::<f64>() / x.len() as f64,
        min: x[0],
        max: x[x.len() - 1],
        median,
        q1,
        q3,
        iqr,
        whisker_low,
        whisker_high,
        outliers,
    })
}
