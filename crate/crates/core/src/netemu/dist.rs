//! Delay and processing-time distributions.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

/// z-score of the upper quartile of a standard normal.
pub const Z_Q3: f64 = 0.674_489_750_196_081_7;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayFamily {
    /// Right-skewed; parameterised by median and IQR ratio.
    #[default]
    LogNormal,
    /// Symmetric, truncated below at one microsecond.
    Normal,
}

/// A delay distribution given by its median and its interquartile range
/// expressed as a fraction of the median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySpec {
    pub median_us: f64,
    /// `(q3 - q1) / median`. Zero makes the distribution a point mass.
    pub iqr_ratio: f64,
    #[serde(default)]
    pub family: DelayFamily,
}

impl DelaySpec {
    pub fn lognormal(median_us: f64, iqr_ratio: f64) -> Self {
        Self {
            median_us,
            iqr_ratio,
            family: DelayFamily::LogNormal,
        }
    }

    pub fn fixed(median_us: f64) -> Self {
        Self::lognormal(median_us, 0.0)
    }

    pub fn is_deterministic(&self) -> bool {
        self.iqr_ratio == 0.0
    }

    /// Log-space standard deviation giving the configured IQR ratio.
    ///
    /// For a log-normal with median `m`, `q3 - q1 = 2 m sinh(z σ)`.
    pub fn log_sigma(&self) -> f64 {
        (self.iqr_ratio / 2.0).asinh() / Z_Q3
    }

    pub fn normal_sd(&self) -> f64 {
        self.iqr_ratio * self.median_us / (2.0 * Z_Q3)
    }

    pub fn mean_us(&self) -> f64 {
        match self.family {
            DelayFamily::LogNormal => self.median_us * (self.log_sigma().powi(2) / 2.0).exp(),
            DelayFamily::Normal => self.median_us,
        }
    }

    /// Draw one value in microseconds. Always strictly positive.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_deterministic() {
            // Keep the stream aligned with the stochastic case.
            let _: f64 = rng.random();
            return self.median_us.max(1.0);
        }
        match self.family {
            DelayFamily::LogNormal => {
                let d = LogNormal::new(self.median_us.ln(), self.log_sigma())
                    .expect("validated delay spec");
                d.sample(rng).max(1.0)
            }
            DelayFamily::Normal => {
                let d = Normal::new(self.median_us, self.normal_sd()).expect("validated delay spec");
                truncated(&d, 1.0, rng)
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.median_us.is_finite() && self.median_us > 0.0) {
            return Err(format!("median must be positive, got {}us", self.median_us));
        }
        if !(self.iqr_ratio.is_finite() && self.iqr_ratio >= 0.0) {
            return Err(format!("iqr_ratio must be >= 0, got {}", self.iqr_ratio));
        }
        Ok(())
    }
}

/// Median of the sum of two independent draws from the same log-normal,
/// via the Fenton–Wilkinson moment match.
pub fn lognormal_pair_sum_median(median: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    2.0 * median * (s2 / 2.0).exp() / (1.0 + (s2.exp() - 1.0) / 2.0).sqrt()
}

/// Normal distribution in milliseconds, truncated below at `floor_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessingSpec {
    pub mean_ms: f64,
    pub sd_ms: f64,
}

/// Processing samples never fall below this.
pub const PROCESSING_FLOOR_MS: f64 = 1.0;

impl ProcessingSpec {
    pub fn fixed(mean_ms: f64) -> Self {
        Self { mean_ms, sd_ms: 0.0 }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sd_ms == 0.0 {
            let _: f64 = rng.random();
            return self.mean_ms.max(PROCESSING_FLOOR_MS);
        }
        let d = Normal::new(self.mean_ms, self.sd_ms).expect("validated processing spec");
        truncated(&d, PROCESSING_FLOOR_MS, rng)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.mean_ms.is_finite() || !self.sd_ms.is_finite() || self.sd_ms < 0.0 {
            return Err(format!(
                "processing spec needs finite mean and sd >= 0, got ({}, {})",
                self.mean_ms, self.sd_ms
            ));
        }
        Ok(())
    }
}

/// Rejection-sample `d` above `floor`; clamps if the mass above the floor is
/// vanishingly small.
fn truncated<R: Rng + ?Sized>(d: &Normal<f64>, floor: f64, rng: &mut R) -> f64 {
    for _ in 0..64 {
        let x = d.sample(rng);
        if x >= floor {
            return x;
        }
    }
    floor
}
