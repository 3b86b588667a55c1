//! Dense symmetric and positive-definite matrices.
//!
//! Storage is `nalgebra`; this module adds the invariants the rest of the
//! crate relies on: exact symmetry, a canonical eigenvector order, and an
//! SPD type that caches its spectrum so matrix functions never decompose the
//! same matrix twice.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gw::{GaussianMeasure, SampleSet};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative threshold below which the smallest eigenvalue counts as zero.
pub const SPD_REL_TOL: f64 = 1e-10;

/// Relative gap below which two eigenvalues are treated as equal.
pub const EIG_CLUSTER_REL_TOL: f64 = 1e-8;

/// A square matrix with `a[i][j] == a[j][i]` bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Symmetrizes `m` as `(m + mᵗ)/2`.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("matrix dimension must be at least 1".into()));
        }
        Ok(Self::symmetrize(m))
    }

    pub(crate) fn symmetrize(mut m: Matrix) -> Self {
        let d = m.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub fn from_row_slice(d: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != d * d {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {d}x{d} matrix, got {}",
                d * d,
                entries.len()
            )));
        }
        Self::new(Matrix::from_row_slice(d, d, entries))
    }

    pub fn identity(d: usize) -> Self {
        SymMatrix(Matrix::identity(d, d))
    }

    pub fn zeros(d: usize) -> Self {
        SymMatrix(Matrix::zeros(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(Matrix::from_diagonal(&Vector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, factor: f64) -> Self {
        SymMatrix(&self.0 * factor)
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, factor: f64, other: &SymMatrix) -> Self {
        SymMatrix::symmetrize(&self.0 + &other.0 * factor)
    }

    /// `r · self · rᵗ`.
    pub fn congruence(&self, r: &Matrix) -> Self {
        SymMatrix::symmetrize(r * &self.0 * r.transpose())
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Spectral decomposition `A = Σ λᵢ pᵢpᵢᵗ`.
///
/// Eigenvalues are descending and listed with multiplicity. Each eigenvector
/// has a positive first non-negligible component. Inside a cluster of equal
/// eigenvalues (see [`EIG_CLUSTER_REL_TOL`]) the vectors are ordered
/// lexicographically, which makes the output a deterministic function of the
/// input even though the basis of an eigenspace is not unique.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    values: Vec<f64>,
    vectors: Matrix,
}

impl EigenDecomposition {
    fn canonical(mut values: Vec<f64>, mut vectors: Matrix) -> Self {
        let d = values.len();
        for k in 0..d {
            let mut col = vectors.column_mut(k);
            let scale = col.amax();
            if let Some(lead) = col.iter().copied().find(|v| v.abs() > 1e-12 * scale) {
                if lead < 0.0 {
                    col.neg_mut();
                }
            }
        }

        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

        let tol = cluster_tolerance(&values);
        let mut start = 0;
        while start < d {
            let mut end = start + 1;
            while end < d && values[order[end - 1]] - values[order[end]] <= tol {
                end += 1;
            }
            order[start..end].sort_by(|&a, &b| {
                let (ca, cb) = (vectors.column(a), vectors.column(b));
                ca.iter()
                    .zip(cb.iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            start = end;
        }

        let sorted_values: Vec<f64> = order.iter().map(|&k| values[k]).collect();
        let sorted_vectors = Matrix::from_fn(d, d, |i, j| vectors[(i, order[j])]);
        values = sorted_values;
        vectors = sorted_vectors;
        EigenDecomposition { values, vectors }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Orthonormal eigenvectors as columns, matching [`Self::values`].
    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn vector(&self, k: usize) -> Vector {
        self.vectors.column(k).into_owned()
    }

    pub fn max_value(&self) -> f64 {
        self.values[0]
    }

    pub fn min_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// `Σ f(λᵢ) pᵢpᵢᵗ`, symmetrized.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let scaled = Matrix::from_fn(self.dim(), self.dim(), |i, j| self.vectors[(i, j)] * f(self.values[j]));
        SymMatrix::symmetrize(&scaled * self.vectors.transpose())
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map(|l| l)
    }
}

/// Absolute gap under which two eigenvalues of this spectrum are "equal".
pub fn cluster_tolerance(values: &[f64]) -> f64 {
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    EIG_CLUSTER_REL_TOL * scale
}

pub fn symmetric_eig(a: &SymMatrix) -> Result<EigenDecomposition> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(a.0.clone());
    Ok(EigenDecomposition::canonical(
        eig.eigenvalues.iter().copied().collect(),
        eig.eigenvectors,
    ))
}

/// Symmetric positive-definite matrix with its cached spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    sym: SymMatrix,
    eig: EigenDecomposition,
}

impl SpdMatrix {
    pub fn new(sym: SymMatrix) -> Result<Self> {
        let eig = symmetric_eig(&sym)?;
        let tolerance = SPD_REL_TOL * eig.max_value().max(0.0);
        if eig.min_value() <= tolerance {
            return Err(Error::NotSpd {
                min_eigenvalue: eig.min_value(),
                tolerance,
            });
        }
        Ok(SpdMatrix { sym, eig })
    }

    pub fn from_matrix(m: Matrix) -> Result<Self> {
        Self::new(SymMatrix::new(m)?)
    }

    pub fn from_row_slice(d: usize, entries: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_row_slice(d, entries)?)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_diagonal(diag))
    }

    pub fn identity(d: usize) -> Self {
        let sym = SymMatrix::identity(d);
        let eig = EigenDecomposition::canonical(vec![1.0; d], Matrix::identity(d, d));
        SpdMatrix { sym, eig }
    }

    /// Builds `Σ f(λᵢ) pᵢpᵢᵗ` without re-decomposing. `f` must be positive.
    fn spectral_image(&self, f: impl Fn(f64) -> f64) -> SpdMatrix {
        let values: Vec<f64> = self.eig.values.iter().map(|&l| f(l)).collect();
        let sym = self.eig.map(f);
        let eig = EigenDecomposition::canonical(values, self.eig.vectors.clone());
        SpdMatrix { sym, eig }
    }

    pub fn dim(&self) -> usize {
        self.sym.dim()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.sym
    }

    pub fn matrix(&self) -> &Matrix {
        self.sym.as_matrix()
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eig
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig.min_value()
    }

    pub fn trace(&self) -> f64 {
        self.sym.trace()
    }

    pub fn congruence(&self, r: &Matrix) -> Result<SpdMatrix> {
        SpdMatrix::new(self.sym.congruence(r))
    }
}

pub fn spd_sqrt(a: &SpdMatrix) -> SpdMatrix {
    a.spectral_image(f64::sqrt)
}

pub fn spd_inv_sqrt(a: &SpdMatrix) -> SpdMatrix {
    a.spectral_image(|l| 1.0 / l.sqrt())
}

/// `tr(AB)` without forming the product.
pub fn trace_product(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.ncols() != b.nrows() || a.nrows() != b.ncols() {
        return Err(Error::InvalidInput(format!(
            "cannot take tr(AB) of {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    Ok(acc)
}

/// Symmetric Gaussian matrix with independent upper triangle,
/// `Hᵢᵢ ~ N(0,2)` and `Hᵢⱼ ~ N(0,1)`: the limit of `√n(Σ̂ₙ − I)` for
/// standard normal data.
pub fn sample_wigner<R: Rng + ?Sized>(d: usize, rng: &mut R) -> SymMatrix {
    let mut h = Matrix::zeros(d, d);
    for i in 0..d {
        let z: f64 = rng.sample(StandardNormal);
        h[(i, i)] = std::f64::consts::SQRT_2 * z;
        for j in (i + 1)..d {
            let z: f64 = rng.sample(StandardNormal);
            h[(i, j)] = z;
            h[(j, i)] = z;
        }
    }
    SymMatrix(h)
}

/// `n` i.i.d. rows `μ + Σ^{1/2} z` with `z ~ N(0, I)`.
pub fn sample_gaussian<R: Rng + ?Sized>(p: &GaussianMeasure, n: usize, rng: &mut R) -> SampleSet {
    let d = p.dim();
    let root = spd_sqrt(p.cov());
    let z = Matrix::from_fn(n, d, |_, _| rng.sample(StandardNormal));
    let mut rows = z * root.matrix();
    for mut row in rows.row_iter_mut() {
        for (x, m) in row.iter_mut().zip(p.mean().iter()) {
            *x += m;
        }
    }
    SampleSet::from_trusted(rows)
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
pub fn sample_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix {
    let g = Matrix::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random SPD matrix with eigenvalues drawn uniformly from `[lo, hi]` and a
/// Haar-random eigenbasis.
pub fn sample_spd<R: Rng + ?Sized>(d: usize, lo: f64, hi: f64, rng: &mut R) -> SpdMatrix {
    let q = sample_orthogonal(d, rng);
    let diag: Vec<f64> = (0..d).map(|_| rng.random_range(lo..=hi)).collect();
    SpdMatrix::new(SymMatrix::from_diagonal(&diag).congruence(&q)).expect("eigenvalues are bounded away from zero")
}
