//! Small statistical helpers: normal distribution, Kolmogorov-Smirnov
//! distances, order-statistic quantiles and moment summaries.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal parameters are valid")
}

pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

/// Inverse of the standard normal distribution function.
pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

/// `sup |F̂ − F|` for a sample against a continuous distribution function.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

pub fn ks_normal(sample: &[f64]) -> f64 {
    let n = standard_normal();
    ks_statistic(sample, |x| n.cdf(x))
}

/// Two-sample Kolmogorov-Smirnov distance `sup |F̂ₐ − F̂ᵦ|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

/// Lower order-statistic quantile of sorted data: the `⌈pN⌉`-th smallest value.
pub fn lower_quantile(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::InvalidInput("quantile of an empty sample".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!("quantile level {p} outside (0, 1)")));
    }
    let n = sorted.len();
    // the small offset keeps p·N that is an integer up to round-off on that integer
    let k = ((p * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(sorted[k - 1])
}

/// Sample mean and unbiased sample variance.
pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let var = if x.len() > 1 { ss / (n - 1.0) } else { 0.0 };
    (mean, var)
}

/// Standard error of the sample mean.
pub fn mean_std_err(x: &[f64]) -> f64 {
    (mean_var(x).1 / x.len() as f64).sqrt()
}

/// Running power sums for a variance estimate with its standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MomentSums {
    pub n: u64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub s4: f64,
}

impl MomentSums {
    pub fn push(&mut self, x: f64) {
        let x2 = x * x;
        self.n += 1;
        self.s1 += x;
        self.s2 += x2;
        self.s3 += x2 * x;
        self.s4 += x2 * x2;
    }

    pub fn merge(&mut self, other: &MomentSums) {
        self.n += other.n;
        self.s1 += other.s1;
        self.s2 += other.s2;
        self.s3 += other.s3;
        self.s4 += other.s4;
    }

    pub fn mean(&self) -> f64 {
        self.s1 / self.n as f64
    }

    /// Unbiased variance.
    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        let m = self.mean();
        (self.s2 - n * m * m) / (n - 1.0)
    }

    /// Large-sample standard error of [`MomentSums::variance`],
    /// `sqrt((m₄ − s⁴)/N)` with `m₄` the fourth central moment.
    pub fn variance_std_err(&self) -> f64 {
        let n = self.n as f64;
        let m = self.mean();
        let (e2, e3, e4) = (self.s2 / n, self.s3 / n, self.s4 / n);
        let m4 = e4 - 4.0 * m * e3 + 6.0 * m * m * e2 - 3.0 * m.powi(4);
        let s2 = self.variance();
        ((m4 - s2 * s2).max(0.0) / n).sqrt()
    }
}
