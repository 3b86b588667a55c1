//! Monte Carlo experiments that reproduce the distributional limits of the
//! estimators. Every experiment draws replicate `k` from stream `k` of its
//! seed, so results do not depend on the thread count.

use gw_core::inference::{bootstrap_m_of_n, bootstrap_n_of_n, test_equality, Decision, Reference};
use gw_core::limitlaw::{
    one_sample_variance, sample_limit_null, sample_weighted_chi2, two_sample_variance, variance_oracle, LimitMode,
};
use gw_core::rng::{seeded, stream};
use gw_core::stats::{ks_normal, ks_two_sample, mean_var};
use gw_core::symmat::{sample_gaussian, sample_spd};
use gw_core::{empirical_gaussian, gw2, gw_hat, gw_hat2, w2_empirical_1d, GaussianMeasure, Result, Vector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

fn replicate<T: Send>(
    reps: usize,
    seed: u64,
    f: impl Fn(&mut gw_core::rng::GwRng) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..reps)
        .into_par_iter()
        .map(|k| f(&mut stream(seed, k as u64)))
        .collect()
}

/// Summary of a simulated standardized statistic against `N(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltRun {
    pub n: usize,
    pub m: Option<usize>,
    pub reps: usize,
    pub gw: f64,
    pub asymptotic_sd: f64,
    pub ks: f64,
    pub mean: f64,
    pub variance: f64,
    #[serde(skip)]
    pub values: Vec<f64>,
}

fn clt_run(n: usize, m: Option<usize>, gw: f64, sd: f64, values: Vec<f64>) -> CltRun {
    let (mean, variance) = mean_var(&values);
    CltRun {
        n,
        m,
        reps: values.len(),
        gw,
        asymptotic_sd: sd,
        ks: ks_normal(&values),
        mean,
        variance,
        values,
    }
}

/// `√n(ĜWₙ − GW)/υ` over `reps` samples of size `n` from `p`.
pub fn one_sample_clt(p: &GaussianMeasure, q: &GaussianMeasure, n: usize, reps: usize, seed: u64) -> Result<CltRun> {
    let gw = gw2(p, q)?;
    let sd = one_sample_variance(p, q)?.sqrt();
    let rate = (n as f64).sqrt();
    let values = replicate(reps, seed, |rng| {
        Ok(rate * (gw_hat(&sample_gaussian(p, n, rng), q)? - gw) / sd)
    })?;
    Ok(clt_run(n, None, gw, sd, values))
}

/// `√(nm/(n+m))(ĜW_{n,m} − GW)/ϖ` with `a = n/(n+m)`.
pub fn two_sample_clt(
    p: &GaussianMeasure,
    q: &GaussianMeasure,
    n: usize,
    m: usize,
    reps: usize,
    seed: u64,
) -> Result<CltRun> {
    let gw = gw2(p, q)?;
    let (nf, mf) = (n as f64, m as f64);
    let sd = two_sample_variance(p, q, nf / (nf + mf))?.sqrt();
    let rate = (nf * mf / (nf + mf)).sqrt();
    let values = replicate(reps, seed, |rng| {
        let sx = sample_gaussian(p, n, rng);
        let sy = sample_gaussian(q, m, rng);
        Ok(rate * (gw_hat2(&sx, &sy)? - gw) / sd)
    })?;
    Ok(clt_run(n, Some(m), gw, sd, values))
}

/// Weights of the spherical three-dimensional one-sample null as printed
/// with the crystallographic application: `σ²(2X + 6X′ + 3/2 X″)` with
/// `X, X′ ∼ χ²₃` and `X″ ∼ χ²₆`.
pub fn published_spherical_weights(sigma2: f64) -> Vec<f64> {
    let mut w = vec![2.0 * sigma2; 3];
    w.extend(std::iter::repeat_n(6.0 * sigma2, 3));
    w.extend(std::iter::repeat_n(1.5 * sigma2, 6));
    w
}

/// Scalar variance of a spherical covariance, if it is one.
pub fn spherical_variance(p: &GaussianMeasure) -> Option<f64> {
    let c = p.cov().matrix();
    let s = c[(0, 0)];
    let d = p.dim();
    let spherical = (0..d).all(|i| (0..d).all(|j| (c[(i, j)] - if i == j { s } else { 0.0 }).abs() <= 1e-12 * s));
    spherical.then_some(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedLawVerdict {
    pub published_mean: f64,
    pub ks_direct_vs_published: f64,
    pub agrees: bool,
}

/// Direct simulation of the scaled estimator at `P = Q` against draws of
/// the second-order limit law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullComparison {
    pub n: usize,
    pub m: Option<usize>,
    pub reps: usize,
    pub null_draws: usize,
    pub chi2_weights: Vec<f64>,
    pub law_mean: f64,
    pub direct_mean: f64,
    pub ks: f64,
    /// Present for spherical measures in three dimensions.
    pub published: Option<PublishedLawVerdict>,
    #[serde(skip)]
    pub direct: Vec<f64>,
}

/// `n·ĜWₙ` (one sample) or `(2nm/(n+m))·ĜW_{n,m}` (two samples) at `P = Q`.
pub fn null_law_comparison(
    p: &GaussianMeasure,
    n: usize,
    m: Option<usize>,
    reps: usize,
    null_draws: usize,
    ks_tolerance: f64,
    seed: u64,
) -> Result<NullComparison> {
    let (mode, direct) = match m {
        None => (
            LimitMode::OneSample,
            replicate(reps, seed, |rng| Ok(n as f64 * gw_hat(&sample_gaussian(p, n, rng), p)?))?,
        ),
        Some(m) => {
            let (nf, mf) = (n as f64, m as f64);
            let scale = 2.0 * nf * mf / (nf + mf);
            let direct = replicate(reps, seed, |rng| {
                let sx = sample_gaussian(p, n, rng);
                let sy = sample_gaussian(p, m, rng);
                Ok(scale * gw_hat2(&sx, &sy)?)
            })?;
            (LimitMode::TwoSample { a: nf / (nf + mf) }, direct)
        }
    };
    let mut rng = seeded(seed ^ 0x6e75_6c6c);
    let law = sample_limit_null(p, mode, null_draws, &mut rng)?;
    let published = match (mode, spherical_variance(p)) {
        (LimitMode::OneSample, Some(s2)) if p.dim() == 3 => {
            let w = published_spherical_weights(s2);
            let draws = sample_weighted_chi2(&w, null_draws, rng.random());
            let ks = ks_two_sample(&direct, &draws);
            Some(PublishedLawVerdict {
                published_mean: w.iter().sum(),
                ks_direct_vs_published: ks,
                agrees: ks <= ks_tolerance,
            })
        }
        _ => None,
    };
    Ok(NullComparison {
        n,
        m,
        reps,
        null_draws,
        chi2_weights: law.weights.clone(),
        law_mean: law.law_mean(),
        direct_mean: mean_var(&direct).0,
        ks: ks_two_sample(&direct, &law.draws),
        published,
        direct,
    })
}

/// One closed-form variance compared with the Monte Carlo oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationRow {
    pub dim: usize,
    pub mode: LimitMode,
    pub formula: f64,
    pub linear_form: f64,
    pub oracle: f64,
    pub std_err: f64,
    pub z_score: f64,
    pub agrees: bool,
}

/// Certifies both closed-form variances at one pair of measures.
pub fn certify_pair(
    p: &GaussianMeasure,
    q: &GaussianMeasure,
    a: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<CertificationRow>> {
    let mut rng = seeded(seed);
    [LimitMode::OneSample, LimitMode::TwoSample { a }]
        .into_iter()
        .map(|mode| {
            let r = variance_oracle(p, q, mode, draws, &mut rng)?;
            Ok(CertificationRow {
                dim: p.dim(),
                mode,
                formula: r.formula_value,
                linear_form: r.linear_form_value,
                oracle: r.oracle_value,
                std_err: r.oracle_std_err,
                z_score: r.z_score(),
                agrees: !r.discrepancy(),
            })
        })
        .collect()
}

/// A random measure with standard normal mean and spectrum in `[0.3, 3]`.
pub fn random_measure<R: Rng + ?Sized>(d: usize, rng: &mut R) -> GaussianMeasure {
    let mean = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    GaussianMeasure::new(mean, sample_spd(d, 0.3, 3.0, rng)).expect("sampled covariance is positive definite")
}

/// [`certify_pair`] over `configs` random pairs in each dimension.
pub fn variance_certification(
    dims: &[usize],
    configs: usize,
    draws: usize,
    seed: u64,
) -> Result<Vec<CertificationRow>> {
    let mut rng = seeded(seed);
    let mut rows = Vec::new();
    for &d in dims {
        for _ in 0..configs {
            let p = random_measure(d, &mut rng);
            let q = random_measure(d, &mut rng);
            let a = rng.random_range(0.1..0.9);
            rows.extend(certify_pair(&p, &q, a, draws, rng.random())?);
        }
    }
    Ok(rows)
}

/// The scalar pair `P = N(0, 1)`, `Q = N(1, 4)`, whose one-sample variance
/// is `4·1·1 + 2·1·(1 − 2)² = 6`.
pub fn scalar_hand_pair() -> (GaussianMeasure, GaussianMeasure) {
    (
        GaussianMeasure::from_slices(&[0.0], &[1.0]).expect("valid"),
        GaussianMeasure::from_slices(&[1.0], &[4.0]).expect("valid"),
    )
}

/// Closed form against the empirical quantile formula on the line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCrossCheck {
    pub n: usize,
    pub fitted: f64,
    pub quantile: f64,
    pub relative_difference: f64,
}

/// Draws `n` points from each of `p` and `q` (both one-dimensional) and
/// compares `GW` of the fitted Gaussians with the empirical `W₂²`.
pub fn quantile_cross_check(
    p: &GaussianMeasure,
    q: &GaussianMeasure,
    n: usize,
    seed: u64,
) -> Result<QuantileCrossCheck> {
    let mut rng = seeded(seed);
    let sx = sample_gaussian(p, n, &mut rng);
    let sy = sample_gaussian(q, n, &mut rng);
    let fitted = gw_hat2(&sx, &sy)?;
    let sorted = |v: Vec<f64>| {
        let mut v = v;
        v.sort_by(f64::total_cmp);
        v
    };
    let quantile = w2_empirical_1d(&sorted(sx.column(0)), &sorted(sy.column(0)))?;
    Ok(QuantileCrossCheck {
        n,
        fitted,
        quantile,
        relative_difference: (fitted - quantile).abs() / quantile,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCheck {
    pub n: usize,
    pub m: usize,
    pub b: usize,
    pub skipped: usize,
    pub ks: f64,
    /// Replicate standard deviation over the reference scale.
    pub sd_ratio: f64,
}

/// n-of-n replicates standardized by the plug-in `υ̂`, against `N(0, 1)`.
pub fn n_of_n_check(p: &GaussianMeasure, q: &GaussianMeasure, n: usize, b: usize, seed: u64) -> Result<BootstrapCheck> {
    let mut rng = seeded(seed);
    let s = sample_gaussian(p, n, &mut rng);
    let boot = bootstrap_n_of_n(&s, q, b, &mut rng)?;
    let v_hat = one_sample_variance(&empirical_gaussian(&s)?, q)?.sqrt();
    let z: Vec<f64> = boot.replicates.iter().map(|x| x / v_hat).collect();
    let sd = mean_var(&boot.replicates).1.sqrt();
    Ok(BootstrapCheck {
        n,
        m: n,
        b,
        skipped: boot.skipped,
        ks: ks_normal(&z),
        sd_ratio: sd / one_sample_variance(p, q)?.sqrt(),
    })
}

/// m-of-n replicates at `P = Q` against the one-sample null law fitted to
/// the data.
pub fn m_of_n_check(
    p: &GaussianMeasure,
    n: usize,
    m: usize,
    b: usize,
    null_draws: usize,
    seed: u64,
) -> Result<BootstrapCheck> {
    let mut rng = seeded(seed);
    let s = sample_gaussian(p, n, &mut rng);
    let boot = bootstrap_m_of_n(&s, p, m, b, &mut rng)?;
    let law = sample_limit_null(&empirical_gaussian(&s)?, LimitMode::OneSample, null_draws, &mut rng)?;
    let sd = mean_var(&boot.replicates).1.sqrt();
    Ok(BootstrapCheck {
        n,
        m,
        b,
        skipped: boot.skipped,
        ks: ks_two_sample(&boot.replicates, &law.draws),
        sd_ratio: sd / mean_var(&law.draws).1.sqrt(),
    })
}

/// Fraction of rejections of the one-sample equality test when samples of
/// size `n` are drawn from `p` and tested against `q`.
pub fn equality_rejection_rate(
    p: &GaussianMeasure,
    q: &GaussianMeasure,
    n: usize,
    reps: usize,
    alpha: f64,
    null_draws: usize,
    seed: u64,
) -> Result<f64> {
    let rejected = replicate(reps, seed, |rng| {
        let s = sample_gaussian(p, n, rng);
        Ok(test_equality(&s, Reference::Known(q), alpha, null_draws, rng)?.decision == Decision::Reject)
    })?;
    Ok(rejected.iter().filter(|r| **r).count() as f64 / reps as f64)
}

/// Replicate values as a one-column CSV table.
pub fn values_table(header: &str, values: &[f64]) -> String {
    let mut out = format!("{header}\n");
    for v in values {
        out.push_str(&format!("{v:?}\n"));
    }
    out
}
