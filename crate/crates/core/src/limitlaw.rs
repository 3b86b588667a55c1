//! Asymptotic variances of the plug-in estimators, the Monte Carlo variance
//! oracle built on the first derivative, and the second-order null laws.
//!
//! Tangent draws follow the Gaussian limit of the fitted parameters:
//! `√n(μ̂ − μ) ⇒ g ∼ N(0, Σ)` and `√n(Σ̂ − Σ) ⇒ G = Σ^{1/2} H Σ^{1/2}` with `H`
//! a Wigner matrix (diagonal variance 2, off-diagonal variance 1). Every
//! draw is a linear image of raw standard normals `z`, which is how both
//! the oracle and the null sampler are organized.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frechet::{GwExpansion, PerturbationPair};
use crate::gw::{cross_spectrum, gw2, GaussianMeasure};
use crate::rng::{fork_seed, stream};
use crate::stats::{lower_quantile, MomentSums};
use crate::symmat::{cluster_tolerance, spd_inv_sqrt, spd_sqrt, symmetric_eig, Matrix, SymMatrix, Vector};

/// Default draw count for variance certification.
pub const DEFAULT_ORACLE_DRAWS: usize = 1_000_000;
/// Default draw count for null-law quantiles.
pub const DEFAULT_NULL_DRAWS: usize = 100_000;

const CHUNK: usize = 1 << 14;

/// Which estimator the limit refers to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LimitMode {
    /// `ĜWₙ = GW(P̂ₙ, Q)` with `Q` known.
    OneSample,
    /// `ĜW_{n,m} = GW(P̂ₙ, Q̂ₘ)` with `n/(n+m) → a`.
    TwoSample { a: f64 },
}

impl LimitMode {
    fn validate(self) -> Result<Self> {
        if let LimitMode::TwoSample { a } = self {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidInput(format!("mixing weight a = {a} outside (0, 1)")));
            }
        }
        Ok(self)
    }

    /// Scale factors applied to the `P` and `Q` tangent blocks.
    fn block_scales(self) -> (f64, f64) {
        match self {
            LimitMode::OneSample => (1.0, 0.0),
            LimitMode::TwoSample { a } => ((1.0 - a).sqrt(), a.sqrt()),
        }
    }
}

/// Independent groups of tangent coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TangentBlock {
    MeanP,
    MeanQ,
    CovP,
    CovQ,
}

impl TangentBlock {
    pub const ALL: [TangentBlock; 4] = [
        TangentBlock::MeanP,
        TangentBlock::MeanQ,
        TangentBlock::CovP,
        TangentBlock::CovQ,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

/// Which closed form to evaluate for the two-sample variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceFormula {
    /// The form certified against the oracle.
    Certified,
    /// Uncertified variant: cross term `2a tr(ΣΞ)` plus a separate
    /// repeated-eigenvalue correction sum. Can be negative.
    TheoremLiteral,
}

/// Closed-form variance split over the independent tangent blocks.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VarianceTerms {
    pub mean_p: f64,
    pub mean_q: f64,
    pub cov_p: f64,
    pub cov_q: f64,
}

impl VarianceTerms {
    pub fn total(&self) -> f64 {
        (self.mean_p + self.mean_q + self.cov_p + self.cov_q).max(0.0)
    }

    pub fn block(&self, b: TangentBlock) -> f64 {
        match b {
            TangentBlock::MeanP => self.mean_p,
            TangentBlock::MeanQ => self.mean_q,
            TangentBlock::CovP => self.cov_p,
            TangentBlock::CovQ => self.cov_q,
        }
    }
}

fn warn_if_null(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<()> {
    let d = gw2(p, q)?;
    if d < 1e-12 {
        log::warn!("GW(P, Q) = {d:e}: the first-order variance degenerates at P = Q");
    }
    Ok(())
}

/// Terms of `υ² = 4(ν−μ)ᵗΣ(ν−μ) + 2tr Σ² + 2tr ΣΞ − 4 Σₖ κₖ^{1/2} rₖᵗ Ξ^{-1/2} Σ Ξ^{1/2} rₖ`,
/// with `(κₖ, rₖ)` the eigenpairs of `Ξ^{1/2} Σ Ξ^{1/2}`.
pub fn one_sample_variance_terms(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<VarianceTerms> {
    if p.dim() != q.dim() {
        return Err(Error::InvalidInput("measures have different dimensions".into()));
    }
    warn_if_null(p, q)?;
    let sigma = p.cov().matrix();
    let xi = q.cov().matrix();
    let gap = q.mean() - p.mean();
    let (xi_root, eig) = cross_spectrum(q.cov(), p.cov())?;
    let xi_inv_root = spd_inv_sqrt(q.cov());
    let inner = xi_inv_root.matrix() * sigma * xi_root.matrix();
    let spectral: f64 = (0..p.dim())
        .map(|k| {
            let r = eig.vector(k);
            eig.values()[k].sqrt() * r.dot(&(&inner * &r))
        })
        .sum();
    Ok(VarianceTerms {
        mean_p: 4.0 * gap.dot(&(sigma * &gap)),
        mean_q: 0.0,
        cov_p: 2.0 * sigma.dot(sigma) + 2.0 * sigma.dot(xi) - 4.0 * spectral,
        cov_q: 0.0,
    })
}

/// Asymptotic variance of `√n(ĜWₙ − GW)`.
pub fn one_sample_variance(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<f64> {
    Ok(one_sample_variance_terms(p, q)?.total())
}

struct TwoSampleParts {
    mean_sigma: f64,
    mean_xi: f64,
    tr_sigma2: f64,
    tr_xi2: f64,
    tr_sigma_xi: f64,
    /// `Σₖ κₖ^{1/2} qₖᵗ Σ qₖ`
    spectral_sigma: f64,
    /// `Σₖ κₖ^{1/2} qₖᵗ Σ^{-1/2} Ξ Σ^{1/2} qₖ`
    spectral_xi: f64,
    /// `Σₖₗ κₗ^{1/2} κₖ^{1/2} Σᵢ Σ_{j≠i, λᵢ=λⱼ} (qₗᵗpᵢ)(pᵢᵗqₖ)(qₗᵗpⱼ)(pⱼᵗqₖ)`
    tied_correction: f64,
}

fn two_sample_parts(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<TwoSampleParts> {
    if p.dim() != q.dim() {
        return Err(Error::InvalidInput("measures have different dimensions".into()));
    }
    warn_if_null(p, q)?;
    let d = p.dim();
    let sigma = p.cov().matrix();
    let xi = q.cov().matrix();
    let gap = q.mean() - p.mean();
    let (root, eig) = cross_spectrum(p.cov(), q.cov())?;
    let inv_root = spd_inv_sqrt(p.cov());
    let conj = inv_root.matrix() * xi * root.matrix();
    let kappa_root: Vec<f64> = eig.values().iter().map(|k| k.sqrt()).collect();
    let mut spectral_sigma = 0.0;
    let mut spectral_xi = 0.0;
    for (k, root_k) in kappa_root.iter().enumerate() {
        let v = eig.vector(k);
        spectral_sigma += root_k * v.dot(&(sigma * &v));
        spectral_xi += root_k * v.dot(&(&conj * &v));
    }

    let lambda = p.cov().eigen().values();
    let tol = cluster_tolerance(lambda);
    // overlaps[(i, l)] = pᵢᵗ qₗ
    let overlaps = p.cov().eigen().vectors().transpose() * eig.vectors();
    let mut tied_correction = 0.0;
    for i in 0..d {
        for j in (0..d).filter(|&j| j != i && (lambda[i] - lambda[j]).abs() <= tol) {
            for l in 0..d {
                for k in 0..d {
                    tied_correction += kappa_root[l]
                        * kappa_root[k]
                        * overlaps[(i, l)]
                        * overlaps[(i, k)]
                        * overlaps[(j, l)]
                        * overlaps[(j, k)];
                }
            }
        }
    }

    Ok(TwoSampleParts {
        mean_sigma: gap.dot(&(sigma * &gap)),
        mean_xi: gap.dot(&(xi * &gap)),
        tr_sigma2: sigma.dot(sigma),
        tr_xi2: xi.dot(xi),
        tr_sigma_xi: sigma.dot(xi),
        spectral_sigma,
        spectral_xi,
        tied_correction,
    })
}

fn check_weight(a: f64) -> Result<()> {
    LimitMode::TwoSample { a }.validate().map(|_| ())
}

/// Block terms of the certified two-sample variance
/// `ϖ² = 4(ν−μ)ᵗ((1−a)Σ+aΞ)(ν−μ) + 2tr((1−a)Σ²+aΞ²) + 2tr ΣΞ
///       − 4 Σₖ κₖ^{1/2} qₖᵗ((1−a)Σ + aΣ^{-1/2}ΞΣ^{1/2})qₖ`,
/// with `(κₖ, qₖ)` the eigenpairs of `Σ^{1/2} Ξ Σ^{1/2}`.
pub fn two_sample_variance_terms(p: &GaussianMeasure, q: &GaussianMeasure, a: f64) -> Result<VarianceTerms> {
    check_weight(a)?;
    let t = two_sample_parts(p, q)?;
    Ok(VarianceTerms {
        mean_p: 4.0 * (1.0 - a) * t.mean_sigma,
        mean_q: 4.0 * a * t.mean_xi,
        cov_p: (1.0 - a) * (2.0 * t.tr_sigma2 + 2.0 * t.tr_sigma_xi - 4.0 * t.spectral_sigma),
        cov_q: a * (2.0 * t.tr_xi2 + 2.0 * t.tr_sigma_xi - 4.0 * t.spectral_xi),
    })
}

/// Asymptotic variance of `√(nm/(n+m))(ĜW_{n,m} − GW)` with `n/(n+m) → a`.
pub fn two_sample_variance(p: &GaussianMeasure, q: &GaussianMeasure, a: f64) -> Result<f64> {
    two_sample_variance_with(p, q, a, VarianceFormula::Certified)
}

pub fn two_sample_variance_with(
    p: &GaussianMeasure,
    q: &GaussianMeasure,
    a: f64,
    formula: VarianceFormula,
) -> Result<f64> {
    match formula {
        VarianceFormula::Certified => Ok(two_sample_variance_terms(p, q, a)?.total()),
        VarianceFormula::TheoremLiteral => {
            check_weight(a)?;
            let t = two_sample_parts(p, q)?;
            Ok(4.0 * ((1.0 - a) * t.mean_sigma + a * t.mean_xi)
                + 2.0 * ((1.0 - a) * t.tr_sigma2 + a * t.tr_xi2)
                + 2.0 * a * t.tr_sigma_xi
                - 4.0 * ((1.0 - a) * t.spectral_sigma + a * t.spectral_xi)
                - 2.0 * (1.0 - a) * t.tied_correction)
        }
    }
}

/// Raw-coordinate directions: `(block, h(eₖ))` for every standard normal `zₖ`
/// driving a tangent draw. Blocks are scaled by `(s_p, s_q)`; a zero scale
/// drops the block.
fn tangent_coordinates(
    p: &GaussianMeasure,
    q: &GaussianMeasure,
    scales: (f64, f64),
) -> Vec<(TangentBlock, PerturbationPair)> {
    let d = p.dim();
    let mut out = Vec::new();
    let sides = [
        (
            scales.0,
            spd_sqrt(p.cov()),
            TangentBlock::MeanP,
            TangentBlock::CovP,
            true,
        ),
        (
            scales.1,
            spd_sqrt(q.cov()),
            TangentBlock::MeanQ,
            TangentBlock::CovQ,
            false,
        ),
    ];
    for (s, root, mean_block, cov_block, is_p) in sides {
        if s == 0.0 {
            continue;
        }
        let root = root.matrix();
        let make = |dm: Vector, dc: SymMatrix| {
            let mut h = PerturbationPair::zeros(d);
            if is_p {
                h.dmu = dm;
                h.dsigma = dc;
            } else {
                h.dnu = dm;
                h.dxi = dc;
            }
            h
        };
        for j in 0..d {
            out.push((mean_block, make(root.column(j) * s, SymMatrix::zeros(d))));
        }
        for i in 0..d {
            for j in i..d {
                let mut e = Matrix::zeros(d, d);
                if i == j {
                    e[(i, i)] = std::f64::consts::SQRT_2;
                } else {
                    e[(i, j)] = 1.0;
                    e[(j, i)] = 1.0;
                }
                let big_g = SymMatrix::symmetrize(root * e * root * s);
                out.push((cov_block, make(Vector::zeros(d), big_g)));
            }
        }
    }
    out
}

/// Coefficients `w` with `DΦ[h(z)] = w·z`, grouped by block.
fn linear_form(p: &GaussianMeasure, q: &GaussianMeasure, mode: LimitMode) -> Result<(Vec<TangentBlock>, Vec<f64>)> {
    let expansion = GwExpansion::new(p, q)?;
    let coords = tangent_coordinates(p, q, mode.block_scales());
    let mut blocks = Vec::with_capacity(coords.len());
    let mut weights = Vec::with_capacity(coords.len());
    for (b, h) in &coords {
        blocks.push(*b);
        weights.push(expansion.first(h)?);
    }
    Ok((blocks, weights))
}

/// Oracle and closed-form variance of one tangent block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockVariance {
    pub block: TangentBlock,
    pub formula: f64,
    pub linear_form: f64,
    pub oracle: f64,
    pub std_err: f64,
}

/// Closed-form variance against the Monte Carlo variance of the first
/// derivative evaluated on tangent draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub mode: LimitMode,
    pub formula_value: f64,
    /// Unbiased Monte Carlo variance of the linear form.
    pub oracle_value: f64,
    pub oracle_std_err: f64,
    /// `‖w‖²`, the variance of the linear form `w·z` computed from its coefficients.
    pub linear_form_value: f64,
    pub n_draws: usize,
    pub seed: u64,
    pub blocks: Vec<BlockVariance>,
}

impl VarianceReport {
    /// True when the formula and the oracle disagree by more than 4 standard errors.
    pub fn discrepancy(&self) -> bool {
        let round_off = 1e-10 * self.formula_value.abs().max(1.0);
        (self.formula_value - self.oracle_value).abs() > 4.0 * self.oracle_std_err + round_off
    }

    /// Disagreement in units of the oracle standard error.
    pub fn z_score(&self) -> f64 {
        let diff = (self.formula_value - self.oracle_value).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.oracle_std_err
        }
    }
}

/// Monte Carlo oracle for the asymptotic variance: the empirical variance of
/// `DΦ` at `(μ, ν, Σ, Ξ)` over `n_draws` tangent draws
/// `((1−a)^{1/2}g, a^{1/2}g′, (1−a)^{1/2}G, a^{1/2}G′)`.
pub fn variance_oracle<R: Rng + ?Sized>(
    p: &GaussianMeasure,
    q: &GaussianMeasure,
    mode: LimitMode,
    n_draws: usize,
    rng: &mut R,
) -> Result<VarianceReport> {
    let mode = mode.validate()?;
    if n_draws < 10_000 {
        return Err(Error::InvalidInput(format!(
            "variance oracle needs at least 10⁴ draws, got {n_draws}"
        )));
    }
    let terms = match mode {
        LimitMode::OneSample => one_sample_variance_terms(p, q)?,
        LimitMode::TwoSample { a } => two_sample_variance_terms(p, q, a)?,
    };
    let (blocks, weights) = linear_form(p, q, mode)?;
    let block_idx: Vec<usize> = blocks.iter().map(|b| b.index()).collect();
    let seed = fork_seed(rng);

    let n_chunks = n_draws.div_ceil(CHUNK);
    let partial: Vec<[MomentSums; 5]> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c as u64);
            let count = CHUNK.min(n_draws - c * CHUNK);
            let mut acc = [MomentSums::default(); 5];
            let mut parts = [0.0; 4];
            for _ in 0..count {
                parts.fill(0.0);
                for (w, &b) in weights.iter().zip(&block_idx) {
                    let z: f64 = rng.sample(StandardNormal);
                    parts[b] += w * z;
                }
                let total: f64 = parts.iter().sum();
                acc[4].push(total);
                for b in 0..4 {
                    acc[b].push(parts[b]);
                }
            }
            acc
        })
        .collect();
    let mut acc = [MomentSums::default(); 5];
    for chunk in &partial {
        for (a, c) in acc.iter_mut().zip(chunk) {
            a.merge(c);
        }
    }

    let block_reports = TangentBlock::ALL
        .iter()
        .filter(|b| blocks.contains(b))
        .map(|&b| BlockVariance {
            block: b,
            formula: terms.block(b),
            linear_form: weights
                .iter()
                .zip(&blocks)
                .filter(|(_, &bb)| bb == b)
                .map(|(w, _)| w * w)
                .sum(),
            oracle: acc[b.index()].variance(),
            std_err: acc[b.index()].variance_std_err(),
        })
        .collect();

    Ok(VarianceReport {
        mode,
        formula_value: terms.total(),
        oracle_value: acc[4].variance(),
        oracle_std_err: acc[4].variance_std_err(),
        linear_form_value: weights.iter().map(|w| w * w).sum(),
        n_draws,
        seed,
        blocks: block_reports,
    })
}

/// Weights `wᵢ` of the null law `Σᵢ wᵢ χ²₁,ᵢ` at `P = Q`.
///
/// One-sample: the limit of `n·ĜWₙ`, i.e. `½D²Φ[(g, 0, G, 0)]`.
/// Two-sample: the limit of `(2nm/(n+m))·ĜW_{n,m}` (equal to `n·ĜW_{n,n}`
/// when `m = n`), i.e. `½D²Φ` on `(2(1−a))^{1/2}(g, G)` and `(2a)^{1/2}(g′, G′)`.
pub fn null_chi2_weights(p: &GaussianMeasure, mode: LimitMode) -> Result<Vec<f64>> {
    let mode = mode.validate()?;
    let scales = match mode {
        LimitMode::OneSample => (1.0, 0.0),
        LimitMode::TwoSample { a } => ((2.0 * (1.0 - a)).sqrt(), (2.0 * a).sqrt()),
    };
    let expansion = GwExpansion::new(p, p)?;
    let dirs: Vec<PerturbationPair> = tangent_coordinates(p, p, scales).into_iter().map(|(_, h)| h).collect();
    let k = dirs.len();
    let diag: Vec<f64> = dirs.iter().map(|h| expansion.second(h)).collect::<Result<_>>()?;
    let mut form = Matrix::zeros(k, k);
    for i in 0..k {
        form[(i, i)] = 0.5 * diag[i];
        for j in 0..i {
            let polar = 0.5 * (expansion.second(&dirs[i].add_scaled(1.0, &dirs[j]))? - diag[i] - diag[j]);
            form[(i, j)] = 0.5 * polar;
            form[(j, i)] = 0.5 * polar;
        }
    }
    let eig = symmetric_eig(&SymMatrix::new(form)?)?;
    let top = eig.max_value().abs().max(f64::MIN_POSITIVE);
    let min = eig.min_value();
    if min < -1e-8 * top {
        log::warn!("second-order form has a negative eigenvalue {min:e}");
    }
    Ok(eig.values().iter().copied().filter(|&w| w > 1e-12 * top).collect())
}

/// Draws from a second-order null law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLawSample {
    /// Draws in generation order.
    pub draws: Vec<f64>,
    /// The same draws in ascending order.
    pub sorted: Vec<f64>,
    /// Weights of the χ² representation, in descending order.
    pub weights: Vec<f64>,
    pub mode: LimitMode,
    pub seed: u64,
}

impl LimitLawSample {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Exact mean of the law, `Σ wᵢ`.
    pub fn law_mean(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Fraction of draws at or above `x`.
    pub fn exceedance(&self, x: f64) -> f64 {
        let below = self.sorted.partition_point(|&v| v < x);
        (self.sorted.len() - below) as f64 / self.sorted.len() as f64
    }
}

/// Draws `Σᵢ wᵢ zᵢ²` from the weighted χ² law with the given weights.
pub fn sample_weighted_chi2(weights: &[f64], n_draws: usize, seed: u64) -> Vec<f64> {
    let n_chunks = n_draws.div_ceil(CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream(seed, c as u64);
            let count = CHUNK.min(n_draws - c * CHUNK);
            (0..count)
                .map(|_| {
                    weights
                        .iter()
                        .map(|w| {
                            let z: f64 = rng.sample(StandardNormal);
                            w * z * z
                        })
                        .sum::<f64>()
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Samples the limit of the scaled estimator at `P = Q`; see [`null_chi2_weights`].
pub fn sample_limit_null<R: Rng + ?Sized>(
    p: &GaussianMeasure,
    mode: LimitMode,
    n_draws: usize,
    rng: &mut R,
) -> Result<LimitLawSample> {
    if n_draws < 1_000 {
        return Err(Error::InvalidInput(format!(
            "null sampler needs at least 10³ draws, got {n_draws}"
        )));
    }
    let weights = null_chi2_weights(p, mode)?;
    let seed = fork_seed(rng);
    let draws = sample_weighted_chi2(&weights, n_draws, seed);
    let mut sorted = draws.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(LimitLawSample {
        draws,
        sorted,
        weights,
        mode,
        seed,
    })
}

/// Lower order-statistic quantile of the draws.
pub fn quantile(law: &LimitLawSample, p: f64) -> Result<f64> {
    lower_quantile(&law.sorted, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;

    fn scalar(mean: f64, var: f64) -> GaussianMeasure {
        GaussianMeasure::from_slices(&[mean], &[var]).unwrap()
    }

    #[test]
    fn one_sample_scalar_hand_case() {
        let v = one_sample_variance(&scalar(0.0, 1.0), &scalar(1.0, 4.0)).unwrap();
        assert_abs_diff_eq!(v, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn linear_form_reproduces_scalar_hand_case() {
        let (_, w) = linear_form(&scalar(0.0, 1.0), &scalar(1.0, 4.0), LimitMode::OneSample).unwrap();
        assert_abs_diff_eq!(w.iter().map(|x| x * x).sum::<f64>(), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn commuting_case_matches_simplified_form() {
        let p = GaussianMeasure::from_slices(&[0.0, 1.0], &[2.0, 0.0, 0.0, 0.5]).unwrap();
        let q = GaussianMeasure::from_slices(&[1.0, -1.0], &[1.0, 0.0, 0.0, 3.0]).unwrap();
        let gap = q.mean() - p.mean();
        let s = p.cov().matrix();
        let diff = spd_sqrt(p.cov()).matrix() - spd_sqrt(q.cov()).matrix();
        let want = 4.0 * gap.dot(&(s * &gap)) + 2.0 * (s * &diff * &diff).trace();
        assert_abs_diff_eq!(one_sample_variance(&p, &q).unwrap(), want, epsilon = 1e-10);
    }

    #[test]
    fn correction_term_vanishes_for_distinct_spectrum() {
        let p = GaussianMeasure::from_slices(&[0.0, 0.0], &[2.0, 0.3, 0.3, 1.0]).unwrap();
        let q = GaussianMeasure::from_slices(&[1.0, 0.0], &[1.0, -0.2, -0.2, 0.5]).unwrap();
        assert_eq!(two_sample_parts(&p, &q).unwrap().tied_correction, 0.0);
    }

    #[test]
    fn two_sample_limits_approach_one_sample_forms() {
        let p = GaussianMeasure::from_slices(&[0.0, 0.5], &[2.0, 0.3, 0.3, 1.0]).unwrap();
        let q = GaussianMeasure::from_slices(&[1.0, 0.0], &[1.0, -0.2, -0.2, 0.5]).unwrap();
        let near0 = two_sample_variance(&p, &q, 1e-9).unwrap();
        let near1 = two_sample_variance(&p, &q, 1.0 - 1e-9).unwrap();
        assert_abs_diff_eq!(near0, one_sample_variance(&p, &q).unwrap(), epsilon = 1e-7);
        assert_abs_diff_eq!(near1, one_sample_variance(&q, &p).unwrap(), epsilon = 1e-7);
    }

    #[test]
    fn literal_two_sample_form_can_go_negative() {
        let v = two_sample_variance_with(
            &scalar(0.0, 1.0),
            &scalar(0.0, 4.0),
            0.01,
            VarianceFormula::TheoremLiteral,
        )
        .unwrap();
        assert!(v < 0.0, "{v}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let p = GaussianMeasure::standard(2);
        let q = GaussianMeasure::spherical(&[1.0, 0.0], 2.0).unwrap();
        assert!(two_sample_variance(&p, &q, 0.0).is_err());
        assert!(two_sample_variance(&p, &q, 1.0).is_err());
        assert!(variance_oracle(&p, &q, LimitMode::OneSample, 100, &mut seeded(1)).is_err());
        assert!(sample_limit_null(&p, LimitMode::OneSample, 10, &mut seeded(1)).is_err());
        assert!(one_sample_variance(&p, &GaussianMeasure::standard(3)).is_err());
    }

    #[test]
    fn oracle_at_equal_measures_is_zero() {
        let p = GaussianMeasure::spherical(&[0.3, -0.2], 1.5).unwrap();
        let r = variance_oracle(&p, &p, LimitMode::TwoSample { a: 0.5 }, 10_000, &mut seeded(4)).unwrap();
        assert!(r.oracle_value.abs() < 1e-20);
        assert!(!r.discrepancy());
    }

    #[test]
    fn spherical_null_weights() {
        for sigma2 in [1.0, 2.5] {
            let p = GaussianMeasure::spherical(&[0.0, 0.0, 0.0], sigma2).unwrap();
            let w = null_chi2_weights(&p, LimitMode::OneSample).unwrap();
            assert_eq!(w.len(), 9);
            for (k, &x) in w.iter().enumerate() {
                let want = if k < 3 { sigma2 } else { 0.5 * sigma2 };
                assert_abs_diff_eq!(x, want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn null_quantiles_are_reproducible() {
        let p = GaussianMeasure::standard(2);
        let a = sample_limit_null(&p, LimitMode::OneSample, 2_000, &mut seeded(9)).unwrap();
        let b = sample_limit_null(&p, LimitMode::OneSample, 2_000, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
        assert!(quantile(&a, 0.5).unwrap() <= quantile(&a, 0.95).unwrap());
        assert!(a.sorted.iter().all(|&x| x >= 0.0));
        assert_eq!(a.exceedance(0.0), 1.0);
        assert_eq!(a.exceedance(f64::INFINITY), 0.0);
    }
}
