//! Monte Carlo summaries.

use serde::Serialize;

/// Normal quantile for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;

/// Mean and sample standard deviation (n − 1 denominator; 0 for n = 1).
/// Summation runs in slice order.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Mean with a `mean ± 1.96·sd` interval across replications.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McSummary {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
}

impl McSummary {
    pub fn from_values(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let (mean, sd) = mean_sd(xs);
        Some(Self::from_mean_sd(mean, sd, xs.len()))
    }

    pub fn from_mean_sd(mean: f64, sd: f64, n: usize) -> Self {
        Self {
            mean,
            sd,
            lower: mean - Z_95 * sd,
            upper: mean + Z_95 * sd,
            n,
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        self.sd / (self.n as f64).sqrt()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}
