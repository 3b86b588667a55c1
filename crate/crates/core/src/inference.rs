//! Confidence intervals, tests and bootstrap procedures for the plug-in
//! Gaussian Wasserstein estimators.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gw::{empirical_gaussian, gw2, gw_hat, gw_hat2, GaussianMeasure, SampleSet};
use crate::limitlaw::{
    one_sample_variance, quantile, sample_limit_null, two_sample_variance, LimitLawSample, LimitMode,
};
use crate::rng::{fork_seed, stream};
use crate::stats::{normal_cdf, normal_quantile};
use crate::symmat::{SpdMatrix, Vector};

/// Plug-in variances below this are treated as the `P = Q` regime.
pub const VARIANCE_FLOOR: f64 = 1e-10;

/// Largest tolerated fraction of degenerate bootstrap resamples.
pub const MAX_SKIPPED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Reject,
    Retain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `n·ĜWₙ` against the one-sample null law at the fitted Gaussian.
    EqualityOneSample,
    /// `(2nm/(n+m))·ĜW_{n,m}` against the two-sample null law at the pooled fit.
    EqualityTwoSample,
    /// Studentized `√n(ĜW − δ)/υ̂` against the standard normal, lower tail.
    Neighborhood,
    /// `(n/σ²)·ĜW` against the spherical one-sample null law.
    SphericalSite,
}

/// Which tail of the statistic leads to rejection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionTail {
    /// Reject when `statistic > threshold`.
    Upper,
    /// Reject when `statistic < threshold`.
    Lower,
}

/// Provenance of the null quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSource {
    pub draws: usize,
    pub seed: u64,
    pub chi2_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub decision: Decision,
    pub alpha: f64,
    pub method: Method,
    pub tail: RejectionTail,
    pub n: usize,
    pub m: Option<usize>,
    pub estimate: f64,
    pub variance_estimate: Option<f64>,
    pub null: Option<NullSource>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Plug-in standard deviation of the scaled estimator.
    pub sigma_hat: f64,
    /// The normalizing rate `√n` or `√(nm/(n+m))`.
    pub rate: f64,
    pub alpha: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_alpha(alpha: f64, allow_one: bool) -> Result<()> {
    let ok = alpha > 0.0 && (alpha < 1.0 || (allow_one && alpha == 1.0));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "significance level {alpha} outside (0, 1)"
        )))
    }
}

fn check_variance(v: f64) -> Result<()> {
    if v < VARIANCE_FLOOR {
        Err(Error::NearNullDegenerate { variance: v })
    } else {
        Ok(())
    }
}

fn wald_interval(estimate: f64, variance: f64, rate: f64, alpha: f64) -> ConfidenceInterval {
    let sigma_hat = variance.sqrt();
    let z = if alpha >= 1.0 {
        0.0
    } else {
        normal_quantile(1.0 - alpha / 2.0)
    };
    let half = z * sigma_hat / rate;
    ConfidenceInterval {
        estimate,
        lower: (estimate - half).max(0.0),
        upper: estimate + half,
        sigma_hat,
        rate,
        alpha,
    }
}

/// Wald interval for `GW(P, Q)` from a sample of `P` and a known `Q`.
pub fn ci_one_sample(s: &SampleSet, q: &GaussianMeasure, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha, true)?;
    let fitted = empirical_gaussian(s)?;
    let estimate = gw2(&fitted, q)?;
    let v = one_sample_variance(&fitted, q)?;
    check_variance(v)?;
    Ok(wald_interval(estimate, v, (s.n() as f64).sqrt(), alpha))
}

/// Wald interval for `GW(P, Q)` from samples of both measures, `a = n/(n+m)`.
pub fn ci_two_sample(sx: &SampleSet, sy: &SampleSet, alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha, true)?;
    let (n, m) = (sx.n() as f64, sy.n() as f64);
    let fx = empirical_gaussian(sx)?;
    let fy = empirical_gaussian(sy)?;
    let estimate = gw2(&fx, &fy)?;
    let v = two_sample_variance(&fx, &fy, n / (n + m))?;
    check_variance(v)?;
    Ok(wald_interval(estimate, v, (n * m / (n + m)).sqrt(), alpha))
}

/// The reference in an equality test.
#[derive(Debug, Clone)]
pub enum Reference<'a> {
    Known(&'a GaussianMeasure),
    Sample(&'a SampleSet),
}

/// Compares a scaled statistic with a simulated null law: reject when it
/// exceeds the lower `(1−α)` order statistic, which is the same event as
/// `p ≤ α` with `p` the fraction of null draws at or above the statistic.
pub fn decide_against_null(statistic: f64, law: &LimitLawSample, alpha: f64) -> Result<(f64, f64, Decision)> {
    check_alpha(alpha, false)?;
    let threshold = quantile(law, 1.0 - alpha)?;
    let p_value = law.exceedance(statistic);
    let decision = if statistic > threshold {
        Decision::Reject
    } else {
        Decision::Retain
    };
    Ok((threshold, p_value, decision))
}

fn null_source(law: &LimitLawSample) -> NullSource {
    NullSource {
        draws: law.len(),
        seed: law.seed,
        chi2_weights: law.weights.clone(),
    }
}

/// Test of `P = Q` with the plug-in second-order null law.
pub fn test_equality<R: Rng + ?Sized>(
    s: &SampleSet,
    reference: Reference<'_>,
    alpha: f64,
    null_draws: usize,
    rng: &mut R,
) -> Result<TestReport> {
    check_alpha(alpha, false)?;
    let n = s.n();
    let (statistic, estimate, law, method, m) = match reference {
        Reference::Known(q) => {
            let fitted = empirical_gaussian(s)?;
            let estimate = gw2(&fitted, q)?;
            let law = sample_limit_null(&fitted, LimitMode::OneSample, null_draws, rng)?;
            (n as f64 * estimate, estimate, law, Method::EqualityOneSample, None)
        }
        Reference::Sample(sy) => {
            if sy.dim() != s.dim() {
                return Err(Error::InvalidInput("samples have different dimensions".into()));
            }
            let m = sy.n();
            let estimate = gw_hat2(s, sy)?;
            let pooled = empirical_gaussian(&s.concat(sy)?)?;
            let a = n as f64 / (n + m) as f64;
            let law = sample_limit_null(&pooled, LimitMode::TwoSample { a }, null_draws, rng)?;
            let rate = 2.0 * (n * m) as f64 / (n + m) as f64;
            (rate * estimate, estimate, law, Method::EqualityTwoSample, Some(m))
        }
    };
    let (threshold, p_value, decision) = decide_against_null(statistic, &law, alpha)?;
    Ok(TestReport {
        statistic,
        threshold,
        p_value,
        decision,
        alpha,
        method,
        tail: RejectionTail::Upper,
        n,
        m,
        estimate,
        variance_estimate: None,
        null: Some(null_source(&law)),
    })
}

/// Equivalence test of `H: GW > δ` against `K: GW ≤ δ`.
///
/// `T = √n(ĜW − δ)/υ̂` is compared with the lower normal quantile `z_α`:
/// `H` is rejected, certifying closeness, when `T < z_α`; `p = Φ(T)`.
pub fn test_neighborhood(s: &SampleSet, q: &GaussianMeasure, delta: f64, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha, false)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "neighborhood radius {delta} must be positive"
        )));
    }
    let fitted = empirical_gaussian(s)?;
    let estimate = gw2(&fitted, q)?;
    let v = one_sample_variance(&fitted, q)?;
    check_variance(v)?;
    let statistic = (s.n() as f64).sqrt() * (estimate - delta) / v.sqrt();
    let threshold = normal_quantile(alpha);
    Ok(TestReport {
        statistic,
        threshold,
        p_value: normal_cdf(statistic),
        decision: if statistic < threshold {
            Decision::Reject
        } else {
            Decision::Retain
        },
        alpha,
        method: Method::Neighborhood,
        tail: RejectionTail::Lower,
        n: s.n(),
        m: None,
        estimate,
        variance_estimate: Some(v),
        null: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapScheme {
    NOfN,
    MOfN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDistribution {
    /// `√n(ĜW*ₙ − ĜWₙ)` or `m(ĜW*ₘ − ĜWₙ)`.
    pub replicates: Vec<f64>,
    /// Requested number of resamples.
    pub b: usize,
    pub m: usize,
    pub scheme: BootstrapScheme,
    /// Resamples dropped for a degenerate covariance.
    pub skipped: usize,
    pub estimate: f64,
    pub seed: u64,
}

fn bootstrap<R: Rng + ?Sized>(
    s: &SampleSet,
    q: &GaussianMeasure,
    m: usize,
    b: usize,
    scheme: BootstrapScheme,
    rng: &mut R,
) -> Result<BootstrapDistribution> {
    if b == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one resample".into()));
    }
    let estimate = gw_hat(s, q)?;
    let n = s.n();
    let scale = match scheme {
        BootstrapScheme::NOfN => (n as f64).sqrt(),
        BootstrapScheme::MOfN => m as f64,
    };
    let seed = fork_seed(rng);
    let outcomes: Vec<Result<Option<f64>>> = (0..b)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, k as u64);
            let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
            match gw_hat(&s.select(&idx), q) {
                Ok(v) => Ok(Some(scale * (v - estimate))),
                Err(e) if e.is_degeneracy() => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut replicates = Vec::with_capacity(b);
    for o in outcomes {
        if let Some(v) = o? {
            replicates.push(v);
        }
    }
    let skipped = b - replicates.len();
    if skipped as f64 > MAX_SKIPPED_FRACTION * b as f64 {
        return Err(Error::BootstrapDegenerate { skipped, total: b });
    }
    if skipped > 0 {
        log::warn!("{skipped} of {b} bootstrap resamples had a degenerate covariance and were skipped");
    }
    Ok(BootstrapDistribution {
        replicates,
        b,
        m,
        scheme,
        skipped,
        estimate,
        seed,
    })
}

/// n-out-of-n bootstrap of `√n(ĜWₙ − GW)`. Valid for `P ≠ Q`; at `P = Q`
/// the replicate law does not approximate the second-order limit.
pub fn bootstrap_n_of_n<R: Rng + ?Sized>(
    s: &SampleSet,
    q: &GaussianMeasure,
    b: usize,
    rng: &mut R,
) -> Result<BootstrapDistribution> {
    bootstrap(s, q, s.n(), b, BootstrapScheme::NOfN, rng)
}

/// m-out-of-n bootstrap of `n·ĜWₙ` at `P = Q`, replicates `m(ĜW*ₘ − ĜWₙ)`.
pub fn bootstrap_m_of_n<R: Rng + ?Sized>(
    s: &SampleSet,
    q: &GaussianMeasure,
    m: usize,
    b: usize,
    rng: &mut R,
) -> Result<BootstrapDistribution> {
    if m >= s.n() {
        return Err(Error::InvalidInput(format!(
            "resample size m = {m} must be below n = {}",
            s.n()
        )));
    }
    if m <= s.dim() {
        return Err(Error::InvalidInput(format!(
            "resample size m = {m} cannot fit a {}-dimensional covariance",
            s.dim()
        )));
    }
    bootstrap(s, q, m, b, BootstrapScheme::MOfN, rng)
}

/// `⌈n^{2/3}⌉`, computed exactly as the least `m` with `m³ ≥ n²`.
pub fn default_m(n: usize) -> usize {
    let target = (n as u128) * (n as u128);
    let mut m = (n as f64).powf(2.0 / 3.0).floor() as u128;
    while m > 0 && (m - 1).pow(3) >= target {
        m -= 1;
    }
    while m.pow(3) < target {
        m += 1;
    }
    m as usize
}

/// One site of a batch: observed positions and the spherical reference
/// `N(μ, σ²I)`.
#[derive(Debug, Clone)]
pub struct Site {
    pub name: String,
    pub samples: SampleSet,
    pub ref_mean: Vector,
    pub b_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SiteResult {
    Tested(TestReport),
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteOutcome {
    pub name: String,
    pub result: SiteResult,
}

impl SiteOutcome {
    pub fn rejected(&self) -> bool {
        matches!(&self.result, SiteResult::Tested(r) if r.decision == Decision::Reject)
    }
}

/// Per-site test of `P = N(μ, σ²I₃)` with `(n/σ²)·ĜW` against one spherical
/// null law. No multiplicity correction is applied.
pub fn protein_batch_test<R: Rng + ?Sized>(
    sites: &[Site],
    alpha: f64,
    null_draws: usize,
    rng: &mut R,
) -> Result<Vec<SiteOutcome>> {
    check_alpha(alpha, false)?;
    for site in sites {
        if site.samples.dim() != 3 || site.ref_mean.len() != 3 {
            return Err(Error::InvalidInput(format!(
                "site {} is not three-dimensional",
                site.name
            )));
        }
        if !(site.b_factor > 0.0 && site.b_factor.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "site {} has non-positive variance",
                site.name
            )));
        }
    }
    let law = sample_limit_null(&GaussianMeasure::standard(3), LimitMode::OneSample, null_draws, rng)?;
    let source = null_source(&law);
    sites
        .iter()
        .map(|site| {
            let result = match site_statistic(site) {
                Ok((statistic, estimate)) => {
                    let (threshold, p_value, decision) = decide_against_null(statistic, &law, alpha)?;
                    SiteResult::Tested(TestReport {
                        statistic,
                        threshold,
                        p_value,
                        decision,
                        alpha,
                        method: Method::SphericalSite,
                        tail: RejectionTail::Upper,
                        n: site.samples.n(),
                        m: None,
                        estimate,
                        variance_estimate: None,
                        null: Some(source.clone()),
                    })
                }
                Err(e) if e.is_degeneracy() => SiteResult::Skipped { reason: e.to_string() },
                Err(e) => return Err(e),
            };
            Ok(SiteOutcome {
                name: site.name.clone(),
                result,
            })
        })
        .collect()
}

fn site_statistic(site: &Site) -> Result<(f64, f64)> {
    if site.samples.n() < 4 {
        return Err(Error::DegenerateSample(format!(
            "{} observations, need at least 4",
            site.samples.n()
        )));
    }
    let cov = SpdMatrix::from_diagonal(&[site.b_factor; 3])?;
    let reference = GaussianMeasure::new(site.ref_mean.clone(), cov)?;
    let estimate = gw_hat(&site.samples, &reference)?;
    Ok((site.samples.n() as f64 / site.b_factor * estimate, estimate))
}
