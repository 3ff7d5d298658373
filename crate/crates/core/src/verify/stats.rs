//! Ensemble statistics: compensated sums, two-pass moments, log-log slopes
//! and a one-sample Kolmogorov–Smirnov distance.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::default();
    for x in values {
        acc.add(x);
    }
    acc.value()
}

pub fn mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Unbiased sample variance, two-pass.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    compensated_sum(values.iter().map(|x| (x - m) * (x - m))) / (values.len() - 1) as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

pub fn mean_vector(samples: &[DVector<f64>]) -> DVector<f64> {
    let dim = samples[0].len();
    DVector::from_fn(dim, |i, _| mean(&samples.iter().map(|s| s[i]).collect::<Vec<_>>()))
}

/// Unbiased sample covariance, two-pass with compensated accumulation.
pub fn covariance(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let dim = samples[0].len();
    let centre = mean_vector(samples);
    let centred: Vec<DVector<f64>> = samples.iter().map(|s| s - &centre).collect();
    let denom = (samples.len() - 1) as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let c = compensated_sum(centred.iter().map(|s| s[i] * s[j])) / denom;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    cov
}

/// Mean of a product series together with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanWithError {
    pub mean: f64,
    pub stderr: f64,
}

impl MeanWithError {
    pub fn of(values: &[f64]) -> Self {
        let m = mean(values);
        let se = (variance(values) / values.len() as f64).sqrt();
        Self { mean: m, stderr: se }
    }

    /// `|mean| / stderr`, or 0 for a degenerate all-zero series.
    pub fn z_score(&self) -> f64 {
        if self.stderr > 0.0 {
            self.mean.abs() / self.stderr
        } else if self.mean == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Ordinary least-squares fit `log y = a + b log x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero when only two points are fitted.
    pub stderr: f64,
}

pub fn loglog_slope(x: &[f64], y: &[f64]) -> SlopeFit {
    assert_eq!(x.len(), y.len(), "loglog_slope needs paired samples");
    assert!(x.len() >= 2, "loglog_slope needs at least two points");
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = mean(&lx);
    let my = mean(&ly);
    let sxx = compensated_sum(lx.iter().map(|a| (a - mx) * (a - mx)));
    let sxy = compensated_sum(lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = lx.len() as f64 - 2.0;
    let stderr = if dof > 0.0 {
        let rss = compensated_sum(
            lx.iter()
                .zip(&ly)
                .map(|(a, b)| (b - intercept - slope * a).powi(2)),
        );
        (rss / dof / sxx).sqrt()
    } else {
        0.0
    };
    SlopeFit {
        slope,
        intercept,
        stderr,
    }
}

/// `sup_x |F_n(x) − Φ(x)|` against the standard normal.
pub fn ks_distance_standard_normal(samples: &[f64]) -> f64 {
    let normal = Normal::standard();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            let hi = (i + 1) as f64 / m - f;
            let lo = f - i as f64 / m;
            hi.max(lo)
        })
        .fold(0.0, f64::max)
}
