//! The Gaussian 2-Wasserstein functional and its plug-in estimators.

use crate::error::{Error, Result};
use crate::symmat::{spd_sqrt, symmetric_eig, EigenDecomposition, Matrix, SpdMatrix, SymMatrix, Vector};

/// `N(mean, cov)` with a positive-definite covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: Vector,
    cov: SpdMatrix,
}

impl GaussianMeasure {
    pub fn new(mean: Vector, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::InvalidInput(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                cov.dim(),
                cov.dim()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mean has non-finite entries".into()));
        }
        Ok(GaussianMeasure { mean, cov })
    }

    /// Convenience constructor from a mean slice and a row-major covariance.
    pub fn from_slices(mean: &[f64], cov: &[f64]) -> Result<Self> {
        let d = mean.len();
        Self::new(Vector::from_column_slice(mean), SpdMatrix::from_row_slice(d, cov)?)
    }

    pub fn standard(d: usize) -> Self {
        GaussianMeasure {
            mean: Vector::zeros(d),
            cov: SpdMatrix::identity(d),
        }
    }

    /// `N(mean, σ² I)`.
    pub fn spherical(mean: &[f64], variance: f64) -> Result<Self> {
        let cov = SpdMatrix::from_diagonal(&vec![variance; mean.len()])?;
        Self::new(Vector::from_column_slice(mean), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    pub fn shifted(&self, v: &Vector) -> Self {
        GaussianMeasure {
            mean: &self.mean + v,
            cov: self.cov.clone(),
        }
    }

    /// Pushforward under `x ↦ r x` for orthogonal `r`.
    pub fn rotated(&self, r: &Matrix) -> Result<Self> {
        GaussianMeasure::new(r * &self.mean, self.cov.congruence(r)?)
    }
}

/// `n` observations in `ℝᵈ`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    rows: Matrix,
}

impl SampleSet {
    pub fn new(rows: Matrix) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::InvalidInput(
                "a sample needs at least one row and one column".into(),
            ));
        }
        if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % rows.nrows(), pos / rows.nrows());
            return Err(Error::InvalidInput(format!(
                "non-finite observation at row {i}, column {j}"
            )));
        }
        Ok(SampleSet { rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("rows have different lengths".into()));
        }
        Self::new(Matrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
    }

    pub(crate) fn from_trusted(rows: Matrix) -> Self {
        SampleSet { rows }
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> &Matrix {
        &self.rows
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.column(j).iter().copied().collect()
    }

    /// Rows picked by index (with repetition), as for a bootstrap resample.
    pub fn select(&self, idx: &[usize]) -> SampleSet {
        SampleSet {
            rows: self.rows.select_rows(idx),
        }
    }

    pub fn map_rows(&self, f: impl Fn(&Vector) -> Vector) -> Result<SampleSet> {
        let d = self.dim();
        let mut out = Matrix::zeros(self.n(), d);
        for i in 0..self.n() {
            let x: Vector = self.rows.row(i).transpose();
            let y = f(&x);
            out.set_row(i, &y.transpose());
        }
        SampleSet::new(out)
    }

    /// Stack two samples of the same dimension.
    pub fn concat(&self, other: &SampleSet) -> Result<SampleSet> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidInput(
                "cannot stack samples of different dimension".into(),
            ));
        }
        let mut rows = Matrix::zeros(self.n() + other.n(), self.dim());
        rows.rows_mut(0, self.n()).copy_from(&self.rows);
        rows.rows_mut(self.n(), other.n()).copy_from(&other.rows);
        Ok(SampleSet { rows })
    }
}

/// Inner spectral data shared by the distance and its derivatives:
/// `Σ^{1/2}` and the decomposition of `Σ^{1/2} Ξ Σ^{1/2}` with round-off
/// negatives clamped to zero.
pub(crate) fn cross_spectrum(a: &SpdMatrix, b: &SpdMatrix) -> Result<(SpdMatrix, EigenDecomposition)> {
    let root = spd_sqrt(a);
    let m = SymMatrix::symmetrize(root.matrix() * b.matrix() * root.matrix());
    let eig = symmetric_eig(&m)?;
    let scale = eig.values().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if eig.min_value() < -1e-10 * scale {
        return Err(Error::DomainError(format!(
            "Σ^(1/2) Ξ Σ^(1/2) has eigenvalue {:e}",
            eig.min_value()
        )));
    }
    Ok((root, eig))
}

/// `‖μ−ν‖² + tr Σ + tr Ξ − 2 tr (Σ^{1/2} Ξ Σ^{1/2})^{1/2}`.
pub fn gw2(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            p.dim(),
            q.dim()
        )));
    }
    let (_, eig) = cross_spectrum(p.cov(), q.cov())?;
    let root_trace: f64 = eig.values().iter().map(|k| k.max(0.0).sqrt()).sum();
    let gap = (p.mean() - q.mean()).norm_squared();
    Ok((gap + p.cov().trace() + q.cov().trace() - 2.0 * root_trace).max(0.0))
}

/// Sample mean and unbiased (`1/(n−1)`) sample covariance.
pub fn empirical_gaussian(s: &SampleSet) -> Result<GaussianMeasure> {
    let (n, d) = (s.n(), s.dim());
    if n < d + 1 {
        return Err(Error::DegenerateSample(format!(
            "{n} observations cannot give a full-rank covariance in dimension {d}"
        )));
    }
    let mean: Vector = s.rows().row_mean().transpose();
    let mut centered = s.rows().clone();
    for mut row in centered.row_iter_mut() {
        for (x, m) in row.iter_mut().zip(mean.iter()) {
            *x -= m;
        }
    }
    let cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
    let cov = SpdMatrix::new(SymMatrix::symmetrize(cov)).map_err(|e| match e {
        Error::NotSpd { min_eigenvalue, .. } => Error::DegenerateSample(format!(
            "sample covariance is rank-deficient (smallest eigenvalue {min_eigenvalue:e})"
        )),
        other => other,
    })?;
    GaussianMeasure::new(mean, cov)
}

/// One-sample plug-in estimator `GW(N(μ̂, Σ̂), Q)`.
pub fn gw_hat(s: &SampleSet, q: &GaussianMeasure) -> Result<f64> {
    if s.dim() != q.dim() {
        return Err(Error::InvalidInput(format!(
            "sample has dimension {} but reference has {}",
            s.dim(),
            q.dim()
        )));
    }
    gw2(&empirical_gaussian(s)?, q)
}

/// Two-sample plug-in estimator `GW(N(μ̂, Σ̂), N(ν̂, Ξ̂))`.
pub fn gw_hat2(sx: &SampleSet, sy: &SampleSet) -> Result<f64> {
    if sx.dim() != sy.dim() {
        return Err(Error::InvalidInput("samples have different dimensions".into()));
    }
    gw2(&empirical_gaussian(sx)?, &empirical_gaussian(sy)?)
}

/// Squared 2-Wasserstein distance between two equal-size empirical
/// measures on the line: `(1/n) Σ (x₍ᵢ₎ − y₍ᵢ₎)²` for sorted inputs.
pub fn w2_empirical_1d(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "empirical quantile formula needs equal sizes, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    let sorted = |v: &[f64]| v.windows(2).all(|w| w[0] <= w[1]);
    if !sorted(x) || !sorted(y) {
        return Err(Error::InvalidInput("inputs must be sorted ascending".into()));
    }
    let total: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(total / x.len() as f64)
}
