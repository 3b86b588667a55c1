//! Spectral operator-function calculus and the derivatives of the Gaussian
//! Wasserstein functional
//!
//! `Φ(μ, ν, A, B) = ‖μ−ν‖² + tr A + tr B − 2 tr (A^{1/2} B A^{1/2})^{1/2}`.
//!
//! For a symmetric `T = Σ λᵢ Pᵢ` and a scalar function `φ`,
//!
//! ```text
//! φ(T + εG) = φ(T) + ε Σᵢₖ φ[λᵢ,λₖ] PᵢGPₖ + ε² Σᵢⱼₖ φ[λᵢ,λⱼ,λₖ] PᵢGPⱼGPₖ + O(ε³)
//! ```
//!
//! with confluent divided differences `φ[·,·]`, `φ[·,·,·]`. Using divided
//! differences everywhere means repeated eigenvalues need no special
//! branches: on exact ties the coefficients reduce to `φ′` and `φ″/2`.
//!
//! Convention: [`d2_spectral_taylor`] returns the ε² coefficient above (no ½),
//! while [`d2_gw`] returns the true second derivative, so that
//! `Φ(θ+εh) = Φ(θ) + ε d_gw + ½ε² d2_gw + O(ε³)`.

use crate::error::{Error, Result};
use crate::gw::{cross_spectrum, GaussianMeasure};
use crate::symmat::{EigenDecomposition, Matrix, SpdMatrix, SymMatrix, Vector};

/// Relative gap under which `φ[a,b]` switches to `φ′` at the midpoint.
const CONFLUENT1_REL: f64 = 1e-5;
/// Relative spread under which `φ[a,b,c]` switches to `φ″/2` at the mean.
const CONFLUENT2_REL: f64 = 1e-4;

/// A scalar function with its first two derivatives, analytic on `(0, ∞)`.
#[derive(Clone, Copy)]
pub struct ScalarFunction {
    pub name: &'static str,
    pub value: fn(f64) -> f64,
    pub deriv1: fn(f64) -> f64,
    pub deriv2: fn(f64) -> f64,
}

impl std::fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ScalarFunction({})", self.name)
    }
}

impl ScalarFunction {
    pub const IDENTITY: ScalarFunction = ScalarFunction {
        name: "identity",
        value: |x| x,
        deriv1: |_| 1.0,
        deriv2: |_| 0.0,
    };

    pub const SQUARE: ScalarFunction = ScalarFunction {
        name: "square",
        value: |x| x * x,
        deriv1: |x| 2.0 * x,
        deriv2: |_| 2.0,
    };

    pub const CUBE: ScalarFunction = ScalarFunction {
        name: "cube",
        value: |x| x * x * x,
        deriv1: |x| 3.0 * x * x,
        deriv2: |x| 6.0 * x,
    };

    pub const SQRT: ScalarFunction = ScalarFunction {
        name: "sqrt",
        value: f64::sqrt,
        deriv1: |x| 0.5 / x.sqrt(),
        deriv2: |x| -0.25 / (x * x.sqrt()),
    };

    pub const INV_SQRT: ScalarFunction = ScalarFunction {
        name: "inv_sqrt",
        value: |x| 1.0 / x.sqrt(),
        deriv1: |x| -0.5 / (x * x.sqrt()),
        deriv2: |x| 0.75 / (x * x * x.sqrt()),
    };

    pub const LOG: ScalarFunction = ScalarFunction {
        name: "log",
        value: f64::ln,
        deriv1: |x| 1.0 / x,
        deriv2: |x| -1.0 / (x * x),
    };

    pub fn eval(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    /// First divided difference `φ[a,b]`, equal to `φ′(a)` when `a = b`.
    pub fn divided_difference(&self, a: f64, b: f64) -> f64 {
        let scale = a.abs().max(b.abs());
        if (a - b).abs() <= CONFLUENT1_REL * scale {
            (self.deriv1)(0.5 * (a + b))
        } else {
            ((self.value)(a) - (self.value)(b)) / (a - b)
        }
    }

    /// Second divided difference `φ[a,b,c]`, equal to `φ″(a)/2` on a triple tie.
    pub fn divided_difference2(&self, a: f64, b: f64, c: f64) -> f64 {
        let mut x = [a, b, c];
        x.sort_by(f64::total_cmp);
        let scale = x[0].abs().max(x[2].abs());
        if x[2] - x[0] <= CONFLUENT2_REL * scale {
            0.5 * (self.deriv2)((a + b + c) / 3.0)
        } else {
            (self.divided_difference(x[1], x[2]) - self.divided_difference(x[0], x[1])) / (x[2] - x[0])
        }
    }

    fn check_spectrum(&self, values: &[f64]) -> Result<()> {
        for &l in values {
            let (v, d1, d2) = ((self.value)(l), (self.deriv1)(l), (self.deriv2)(l));
            if !(v.is_finite() && d1.is_finite() && d2.is_finite()) {
                return Err(Error::DomainError(format!(
                    "{} is not finite at eigenvalue {l:e}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// A tangent direction `(g, g′, G, G′)` at `(μ, ν, Σ, Ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPair {
    pub dmu: Vector,
    pub dnu: Vector,
    pub dsigma: SymMatrix,
    pub dxi: SymMatrix,
}

impl PerturbationPair {
    pub fn new(dmu: Vector, dnu: Vector, dsigma: SymMatrix, dxi: SymMatrix) -> Result<Self> {
        let d = dmu.len();
        if dnu.len() != d || dsigma.dim() != d || dxi.dim() != d {
            return Err(Error::InvalidInput(
                "perturbation components have inconsistent dimensions".into(),
            ));
        }
        Ok(PerturbationPair { dmu, dnu, dsigma, dxi })
    }

    pub fn zeros(d: usize) -> Self {
        PerturbationPair {
            dmu: Vector::zeros(d),
            dnu: Vector::zeros(d),
            dsigma: SymMatrix::zeros(d),
            dxi: SymMatrix::zeros(d),
        }
    }

    /// Direction that only moves the first measure.
    pub fn one_sample(g: Vector, big_g: SymMatrix) -> Result<Self> {
        let d = g.len();
        Self::new(g, Vector::zeros(d), big_g, SymMatrix::zeros(d))
    }

    pub fn dim(&self) -> usize {
        self.dmu.len()
    }

    pub fn scale(&self, c: f64) -> Self {
        PerturbationPair {
            dmu: &self.dmu * c,
            dnu: &self.dnu * c,
            dsigma: self.dsigma.scale(c),
            dxi: self.dxi.scale(c),
        }
    }

    /// `self + c · other`.
    pub fn add_scaled(&self, c: f64, other: &PerturbationPair) -> Self {
        PerturbationPair {
            dmu: &self.dmu + &other.dmu * c,
            dnu: &self.dnu + &other.dnu * c,
            dsigma: self.dsigma.add_scaled(c, &other.dsigma),
            dxi: self.dxi.add_scaled(c, &other.dxi),
        }
    }

    /// The same direction expressed after the change of basis `x ↦ r x`.
    pub fn rotated(&self, r: &Matrix) -> Self {
        PerturbationPair {
            dmu: r * &self.dmu,
            dnu: r * &self.dnu,
            dsigma: self.dsigma.congruence(r),
            dxi: self.dxi.congruence(r),
        }
    }

    /// The pair of measures at `θ + ε h`.
    pub fn displace(
        &self,
        p: &GaussianMeasure,
        q: &GaussianMeasure,
        eps: f64,
    ) -> Result<(GaussianMeasure, GaussianMeasure)> {
        let cov_p = SpdMatrix::new(p.cov().as_sym().add_scaled(eps, &self.dsigma))?;
        let cov_q = SpdMatrix::new(q.cov().as_sym().add_scaled(eps, &self.dxi))?;
        Ok((
            GaussianMeasure::new(p.mean() + &self.dmu * eps, cov_p)?,
            GaussianMeasure::new(q.mean() + &self.dnu * eps, cov_q)?,
        ))
    }
}

fn to_eigenbasis(eig: &EigenDecomposition, g: &Matrix) -> Matrix {
    eig.vectors().transpose() * g * eig.vectors()
}

fn from_eigenbasis(eig: &EigenDecomposition, g: &Matrix) -> SymMatrix {
    SymMatrix::symmetrize(eig.vectors() * g * eig.vectors().transpose())
}

pub(crate) fn first_dd_table(phi: &ScalarFunction, values: &[f64]) -> Matrix {
    let d = values.len();
    Matrix::from_fn(d, d, |i, k| phi.divided_difference(values[i], values[k]))
}

/// `Σᵢₖ φ[λᵢ,λₖ] PᵢGPₖ` for the spectrum in `eig`.
pub(crate) fn d_spectral_eig(phi: &ScalarFunction, eig: &EigenDecomposition, g: &Matrix) -> SymMatrix {
    let table = first_dd_table(phi, eig.values());
    let hat = to_eigenbasis(eig, g).component_mul(&table);
    from_eigenbasis(eig, &hat)
}

/// Eigenbasis coefficients of `Σᵢⱼₖ φ[λᵢ,λⱼ,λₖ] PᵢGPⱼGPₖ`, given `Ĝ = VᵗGV`.
fn taylor2_hat(phi: &ScalarFunction, values: &[f64], g_hat: &Matrix) -> Matrix {
    let d = values.len();
    Matrix::from_fn(d, d, |i, k| {
        (0..d)
            .map(|j| phi.divided_difference2(values[i], values[j], values[k]) * g_hat[(i, j)] * g_hat[(j, k)])
            .sum()
    })
}

pub(crate) fn d2_spectral_taylor_eig(phi: &ScalarFunction, eig: &EigenDecomposition, g: &Matrix) -> SymMatrix {
    let hat = taylor2_hat(phi, eig.values(), &to_eigenbasis(eig, g));
    from_eigenbasis(eig, &hat)
}

fn check_dims(a: &SpdMatrix, g: &SymMatrix) -> Result<()> {
    if a.dim() != g.dim() {
        return Err(Error::InvalidInput(format!(
            "direction is {}x{} but the base point is {}x{}",
            g.dim(),
            g.dim(),
            a.dim(),
            a.dim()
        )));
    }
    Ok(())
}

/// `φ(A) = Σ φ(λᵢ) Pᵢ`.
pub fn apply_spectral(phi: &ScalarFunction, a: &SpdMatrix) -> Result<SymMatrix> {
    let eig = a.eigen();
    if let Some(l) = eig.values().iter().find(|&&l| !phi.eval(l).is_finite()) {
        return Err(Error::DomainError(format!(
            "{} is not finite at eigenvalue {l:e}",
            phi.name
        )));
    }
    Ok(eig.map(|l| phi.eval(l)))
}

/// First Fréchet derivative of `T ↦ φ(T)` at `A` in direction `G`.
pub fn d_spectral(phi: &ScalarFunction, a: &SpdMatrix, g: &SymMatrix) -> Result<SymMatrix> {
    check_dims(a, g)?;
    phi.check_spectrum(a.eigen().values())?;
    Ok(d_spectral_eig(phi, a.eigen(), g.as_matrix()))
}

/// Second-order Taylor coefficient `Q[G]` of `φ(A + εG)` (the ε² term, without ½).
pub fn d2_spectral_taylor(phi: &ScalarFunction, a: &SpdMatrix, g: &SymMatrix) -> Result<SymMatrix> {
    check_dims(a, g)?;
    phi.check_spectrum(a.eigen().values())?;
    Ok(d2_spectral_taylor_eig(phi, a.eigen(), g.as_matrix()))
}

/// How pairs `i ≠ m` with `λᵢ = λₘ` enter the covariance part of `DΦ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiedPairs {
    /// Confluent divided difference: the pair contributes `(λᵢλₘ)^{-1/2} = λᵢ^{-1}`.
    Confluent,
    /// The pair is dropped. This is not the derivative when `Σ` has a
    /// repeated eigenvalue; kept to reproduce the literal two-branch sum.
    Omitted,
}

/// Spectral data of `Φ` at a base point `(μ, ν, A, B)`, reused across many
/// directions.
#[derive(Debug, Clone)]
pub struct GwExpansion {
    mean_gap: Vector,
    a_eig: EigenDecomposition,
    a_root: Matrix,
    b: Matrix,
    m_eig: EigenDecomposition,
    /// `Σₗ κₗ^{1/2} Σᵢₘ (λᵢλₘ)^{-1/2} Pᵢ Qₗ Pₘ`, i.e. `A^{-1/2} M^{1/2} A^{-1/2}`.
    transport: Matrix,
    /// `Σₗ κₗ^{-1/2} A^{1/2} Qₗ A^{1/2}`, i.e. `A^{1/2} M^{-1/2} A^{1/2}`.
    transport_back: Matrix,
}

impl GwExpansion {
    pub fn new(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<Self> {
        if p.dim() != q.dim() {
            return Err(Error::InvalidInput("measures have different dimensions".into()));
        }
        let (root, m_eig) = cross_spectrum(p.cov(), q.cov())?;
        if m_eig.min_value() <= 0.0 {
            return Err(Error::NotSpd {
                min_eigenvalue: m_eig.min_value(),
                tolerance: 0.0,
            });
        }
        let a_eig = p.cov().eigen().clone();
        let a_root = root.matrix().clone();
        let transport = Self::transport_matrix(&a_eig, &m_eig, TiedPairs::Confluent);
        let transport_back = {
            let inner = m_eig.map(|k| 1.0 / k.sqrt());
            SymMatrix::symmetrize(&a_root * inner.as_matrix() * &a_root).into_matrix()
        };
        Ok(GwExpansion {
            mean_gap: p.mean() - q.mean(),
            a_eig,
            a_root,
            b: q.cov().matrix().clone(),
            m_eig,
            transport,
            transport_back,
        })
    }

    fn transport_matrix(a_eig: &EigenDecomposition, m_eig: &EigenDecomposition, ties: TiedPairs) -> Matrix {
        let d = a_eig.dim();
        let lambda = a_eig.values();
        let tol = crate::symmat::cluster_tolerance(lambda);
        // q̂ₗ = Pᵗ qₗ, the eigenvectors of M in the eigenbasis of A
        let q_hat = a_eig.vectors().transpose() * m_eig.vectors();
        let mut t_hat = Matrix::zeros(d, d);
        for l in 0..d {
            let root_kappa = m_eig.values()[l].sqrt();
            for i in 0..d {
                for m in 0..d {
                    if ties == TiedPairs::Omitted && i != m && (lambda[i] - lambda[m]).abs() <= tol {
                        continue;
                    }
                    t_hat[(i, m)] += root_kappa * q_hat[(i, l)] * q_hat[(m, l)] / (lambda[i] * lambda[m]).sqrt();
                }
            }
        }
        SymMatrix::symmetrize(a_eig.vectors() * t_hat * a_eig.vectors().transpose()).into_matrix()
    }

    pub fn dim(&self) -> usize {
        self.mean_gap.len()
    }

    /// `T = A^{-1/2}(A^{1/2}BA^{1/2})^{1/2}A^{-1/2}`, the linear optimal map
    /// pushing `N(0,A)` onto `N(0,B)`.
    pub fn transport(&self) -> &Matrix {
        &self.transport
    }

    /// `T⁻¹ = A^{1/2}(A^{1/2}BA^{1/2})^{-1/2}A^{1/2}`.
    pub fn transport_back(&self) -> &Matrix {
        &self.transport_back
    }

    /// `DΦ[h]`.
    pub fn first(&self, h: &PerturbationPair) -> Result<f64> {
        self.first_with(h, TiedPairs::Confluent)
    }

    pub fn first_with(&self, h: &PerturbationPair, ties: TiedPairs) -> Result<f64> {
        self.check(h)?;
        let t = match ties {
            TiedPairs::Confluent => std::borrow::Cow::Borrowed(&self.transport),
            TiedPairs::Omitted => std::borrow::Cow::Owned(Self::transport_matrix(&self.a_eig, &self.m_eig, ties)),
        };
        let g = h.dsigma.as_matrix();
        let gp = h.dxi.as_matrix();
        let mean = 2.0 * self.mean_gap.dot(&(&h.dmu - &h.dnu));
        let trace = g.trace() + gp.trace();
        Ok(mean + trace - t.dot(g) - self.transport_back.dot(gp))
    }

    /// `D²Φ[h, h]`, assembled by the chain and product rules over
    /// `Ψ(A, B) = ψ(ψ(A) B ψ(A))` with `ψ = √·`.
    pub fn second(&self, h: &PerturbationPair) -> Result<f64> {
        self.check(h)?;
        let sqrt = ScalarFunction::SQRT;
        let g = h.dsigma.as_matrix();
        let gp = h.dxi.as_matrix();
        let s = &self.a_root;
        let b = &self.b;

        let r1 = d_spectral_eig(&sqrt, &self.a_eig, g).into_matrix();
        let r2 = d2_spectral_taylor_eig(&sqrt, &self.a_eig, g).into_matrix() * 2.0;

        // first and second derivative of M(A, B) = A^{1/2} B A^{1/2}
        let c = &r1 * b * s + s * gp * s + s * b * &r1;
        let d2m = &r2 * b * s + s * b * &r2 + (&r1 * gp * s) * 2.0 + (&r1 * b * &r1) * 2.0 + (s * gp * &r1) * 2.0;

        let kappa = self.m_eig.values();
        let c_hat = to_eigenbasis(&self.m_eig, &c);
        let d2m_hat = to_eigenbasis(&self.m_eig, &d2m);
        let d = self.dim();
        let mut curvature = 0.0;
        for l in 0..d {
            for j in 0..d {
                curvature += sqrt.divided_difference2(kappa[l], kappa[j], kappa[l]) * c_hat[(l, j)] * c_hat[(j, l)];
            }
        }
        let slope: f64 = (0..d).map(|l| (sqrt.deriv1)(kappa[l]) * d2m_hat[(l, l)]).sum();
        let tr_d2_psi = 2.0 * curvature + slope;

        let dm = &h.dmu - &h.dnu;
        Ok(2.0 * dm.norm_squared() - 2.0 * tr_d2_psi)
    }

    fn check(&self, h: &PerturbationPair) -> Result<()> {
        if h.dim() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "direction has dimension {} but the base point has {}",
                h.dim(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// `D_{(μ,ν,Σ,Ξ)}Φ[h]`.
pub fn d_gw(p: &GaussianMeasure, q: &GaussianMeasure, h: &PerturbationPair) -> Result<f64> {
    GwExpansion::new(p, q)?.first(h)
}

/// `D²_{(μ,ν,Σ,Ξ)}Φ[h, h]` (true second derivative; the Taylor term is half of it).
pub fn d2_gw(p: &GaussianMeasure, q: &GaussianMeasure, h: &PerturbationPair) -> Result<f64> {
    GwExpansion::new(p, q)?.second(h)
}

/// Derivative in `(μ, Σ)` with `Q = N(ν, B)` held fixed, written with the
/// spectrum `(κₗ, rₗ)` of `B^{1/2} A B^{1/2}`:
/// `2(μ−ν)·g + tr G − Σₗ κₗ^{-1/2} rₗᵗ B^{1/2} G B^{1/2} rₗ`.
pub fn d_gw_one_sample(p: &GaussianMeasure, q: &GaussianMeasure, g: &Vector, big_g: &SymMatrix) -> Result<f64> {
    let d = p.dim();
    if q.dim() != d || g.len() != d || big_g.dim() != d {
        return Err(Error::InvalidInput("inconsistent dimensions".into()));
    }
    let (b_root, eig) = cross_spectrum(q.cov(), p.cov())?;
    let sandwiched = b_root.matrix() * big_g.as_matrix() * b_root.matrix();
    let mut spectral = 0.0;
    for l in 0..d {
        let r = eig.vector(l);
        spectral += r.dot(&(&sandwiched * &r)) / eig.values()[l].sqrt();
    }
    Ok(2.0 * (p.mean() - q.mean()).dot(g) + big_g.trace() - spectral)
}

/// Empirical orders of the first- and second-order Taylor remainders of
/// `Φ` along `h`, from a least-squares fit of `log |remainder|` against `log ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorOrders {
    pub first: f64,
    pub second: f64,
    pub first_steps: Vec<f64>,
    pub second_steps: Vec<f64>,
}

/// `(ε, |R₁|, |R₂|, noise floor of R₁, noise floor of R₂)` at one grid step.
type Row = (f64, f64, f64, f64, f64);

/// Fits each remainder on the (up to four) smallest steps of the grid
/// `ε = 10⁻²·2⁻ᵏ` whose remainder stays well above its rounding noise. `Φ` is
/// evaluated in double-double, so the noise is set by the `f64` values of
/// the two derivatives. The grid never leaves `(0, 10⁻²]`, so `h` must keep
/// `θ + εh` positive definite there.
pub fn taylor_orders(p: &GaussianMeasure, q: &GaussianMeasure, h: &PerturbationPair) -> Result<TaylorOrders> {
    let e = GwExpansion::new(p, q)?;
    let (d1, d2) = (e.first(h)?, e.second(h)?);
    let base = crate::gw::gw2(p, q)?.abs();
    let mut rows: Vec<Row> = Vec::new();
    for k in 0..30 {
        let t = 1e-2 * 0.5f64.powi(k);
        let (r1, r2) = crate::precise::taylor_remainders(p, q, h, t, d1, d2)?;
        let floor1 = 64.0 * f64::EPSILON * t * d1.abs() + 1e-28 * base;
        let floor2 = floor1 + 64.0 * f64::EPSILON * t * t * d2.abs();
        rows.push((t, r1.abs(), r2.abs(), floor1, floor2));
    }
    let fit = |pick: fn(&Row) -> (f64, f64)| -> (f64, Vec<f64>) {
        for margin in [1e3, 1e2] {
            let kept: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| pick(r).0 > margin * pick(r).1)
                .map(|r| (r.0, pick(r).0))
                .collect();
            if kept.len() >= 2 {
                let tail = &kept[kept.len().saturating_sub(4)..];
                let (x, y): (Vec<f64>, Vec<f64>) = tail.iter().copied().unzip();
                return (log_slope(&x, &y), x);
            }
        }
        // remainder indistinguishable from round-off at every step
        (f64::INFINITY, Vec::new())
    };
    let (first, first_steps) = fit(|r| (r.1, r.3));
    let (second, second_steps) = fit(|r| (r.2, r.4));
    Ok(TaylorOrders {
        first,
        second,
        first_steps,
        second_steps,
    })
}

fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::symmat::{sample_spd, sample_wigner, spd_sqrt};
    use approx::assert_abs_diff_eq;

    fn diff(a: &SymMatrix, b: &Matrix) -> f64 {
        (a.as_matrix() - b).norm()
    }

    #[test]
    fn divided_differences_confluent_values() {
        let s = ScalarFunction::SQRT;
        assert_abs_diff_eq!(s.divided_difference(4.0, 4.0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s.divided_difference(4.0, 9.0), 0.2, epsilon = 1e-15);
        let c = ScalarFunction::CUBE;
        assert_abs_diff_eq!(c.divided_difference2(1.0, 1.0, 1.0), 3.0, epsilon = 1e-14);
        // x³[a,b,c] = a+b+c
        assert_abs_diff_eq!(c.divided_difference2(1.0, 2.0, 4.0), 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.divided_difference2(2.0, 2.0, 5.0), 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            ScalarFunction::SQUARE.divided_difference2(0.3, 7.0, 2.0),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn divided_differences_are_continuous_at_ties() {
        let s = ScalarFunction::SQRT;
        let tie = s.divided_difference2(2.0, 2.0, 3.0);
        for delta in [1e-4, 1e-6, 1e-8] {
            let near = s.divided_difference2(2.0, 2.0 + delta, 3.0);
            assert!((near - tie).abs() < 10.0 * delta, "δ={delta}: {near} vs {tie}");
            let d1 = s.divided_difference(2.0, 2.0 + delta);
            assert!((d1 - s.divided_difference(2.0, 2.0)).abs() < delta);
        }
    }

    #[test]
    fn apply_spectral_examples() {
        let a = SpdMatrix::from_diagonal(&[2.0, 3.0]).unwrap();
        assert!(diff(&apply_spectral(&ScalarFunction::IDENTITY, &a).unwrap(), a.matrix()) < 1e-15);
        let sq = apply_spectral(&ScalarFunction::SQUARE, &a).unwrap();
        assert!(diff(&sq, &Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 9.0]))) < 1e-14);

        let mut rng = seeded(3);
        let a = sample_spd(4, 0.2, 5.0, &mut rng);
        let r = apply_spectral(&ScalarFunction::SQRT, &a).unwrap();
        assert!(diff(&r, spd_sqrt(&a).matrix()) <= 1e-12);
        let back = r.as_matrix() * r.as_matrix();
        assert!((back - a.matrix()).norm() <= 1e-10 * a.matrix().norm());
    }

    #[test]
    fn polynomial_identities() {
        let mut rng = seeded(17);
        for d in [1, 2, 3, 5] {
            let a = sample_spd(d, 0.5, 3.0, &mut rng);
            let g = sample_wigner(d, &mut rng);
            let (am, gm) = (a.matrix(), g.as_matrix());
            let scale = am.norm() * gm.norm();

            let d_sq = d_spectral(&ScalarFunction::SQUARE, &a, &g).unwrap();
            assert!(diff(&d_sq, &(am * gm + gm * am)) <= 1e-12 * scale);
            let d_id = d_spectral(&ScalarFunction::IDENTITY, &a, &g).unwrap();
            assert!(diff(&d_id, gm) <= 1e-12 * gm.norm());
            let q_sq = d2_spectral_taylor(&ScalarFunction::SQUARE, &a, &g).unwrap();
            assert!(diff(&q_sq, &(gm * gm)) <= 1e-12 * gm.norm_squared());
        }
    }

    #[test]
    fn cube_taylor_term_at_identity() {
        let mut rng = seeded(5);
        let g = sample_wigner(3, &mut rng);
        let q = d2_spectral_taylor(&ScalarFunction::CUBE, &SpdMatrix::identity(3), &g).unwrap();
        let want = g.as_matrix() * g.as_matrix() * 3.0;
        assert!(diff(&q, &want) <= 1e-12 * want.norm());
    }

    #[test]
    fn derivative_vanishes_at_equal_measures() {
        let mut rng = seeded(21);
        let p = GaussianMeasure::new(Vector::from_vec(vec![1.0, 2.0, 3.0]), sample_spd(3, 0.3, 2.0, &mut rng)).unwrap();
        let h = PerturbationPair::new(
            Vector::from_vec(vec![0.3, -0.1, 0.2]),
            Vector::from_vec(vec![-0.5, 0.4, 0.0]),
            sample_wigner(3, &mut rng),
            sample_wigner(3, &mut rng),
        )
        .unwrap();
        assert!(d_gw(&p, &p, &h).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn scalar_derivative_example() {
        let p = GaussianMeasure::from_slices(&[0.0], &[1.0]).unwrap();
        let q = GaussianMeasure::from_slices(&[0.0], &[4.0]).unwrap();
        let h = PerturbationPair::one_sample(Vector::zeros(1), SymMatrix::identity(1)).unwrap();
        assert_abs_diff_eq!(d_gw(&p, &q, &h).unwrap(), -1.0, epsilon = 1e-14);
        let v = d_gw_one_sample(&p, &q, &Vector::zeros(1), &SymMatrix::identity(1)).unwrap();
        assert_abs_diff_eq!(v, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn one_sample_derivative_without_covariance_direction() {
        let mut rng = seeded(2);
        let p = GaussianMeasure::new(Vector::from_vec(vec![0.5, 1.0]), sample_spd(2, 0.5, 2.0, &mut rng)).unwrap();
        let q = GaussianMeasure::new(Vector::from_vec(vec![-1.0, 0.0]), sample_spd(2, 0.5, 2.0, &mut rng)).unwrap();
        let g = Vector::from_vec(vec![0.3, -0.7]);
        let v = d_gw_one_sample(&p, &q, &g, &SymMatrix::zeros(2)).unwrap();
        assert_eq!(v, 2.0 * (p.mean() - q.mean()).dot(&g));
    }

    #[test]
    fn second_derivative_scalar_cases() {
        let one = GaussianMeasure::from_slices(&[0.0], &[1.0]).unwrap();
        let h = PerturbationPair::new(
            Vector::from_vec(vec![1.0]),
            Vector::zeros(1),
            SymMatrix::zeros(1),
            SymMatrix::zeros(1),
        )
        .unwrap();
        assert_abs_diff_eq!(d2_gw(&one, &one, &h).unwrap(), 2.0, epsilon = 1e-14);

        let sigma2 = 2.5;
        let c = 0.7;
        let p = GaussianMeasure::from_slices(&[0.0], &[sigma2]).unwrap();
        let h = PerturbationPair::one_sample(Vector::zeros(1), SymMatrix::from_diagonal(&[c])).unwrap();
        assert_abs_diff_eq!(d2_gw(&p, &p, &h).unwrap(), c * c / (2.0 * sigma2), epsilon = 1e-14);
    }

    #[test]
    fn second_derivative_matches_scalar_closed_form() {
        let (a, b) = (1.7, 0.6);
        let (g, gp, cov_g, cov_gp) = (0.4, -0.3, 0.9, 0.25);
        let p = GaussianMeasure::from_slices(&[0.2], &[a]).unwrap();
        let q = GaussianMeasure::from_slices(&[-1.0], &[b]).unwrap();
        let h = PerturbationPair::new(
            Vector::from_vec(vec![g]),
            Vector::from_vec(vec![gp]),
            SymMatrix::from_diagonal(&[cov_g]),
            SymMatrix::from_diagonal(&[cov_gp]),
        )
        .unwrap();
        let want = 2.0 * (g - gp) * (g - gp)
            + (b / a * cov_g * cov_g + a / b * cov_gp * cov_gp - 2.0 * cov_g * cov_gp) / (2.0 * (a * b).sqrt());
        assert_abs_diff_eq!(d2_gw(&p, &q, &h).unwrap(), want, epsilon = 1e-13);
    }

    #[test]
    fn omitting_tied_pairs_only_matters_for_repeated_eigenvalues() {
        let mut rng = seeded(31);
        let q = GaussianMeasure::new(Vector::zeros(3), sample_spd(3, 0.5, 2.0, &mut rng)).unwrap();
        let h = PerturbationPair::one_sample(Vector::zeros(3), sample_wigner(3, &mut rng)).unwrap();

        let distinct = GaussianMeasure::new(Vector::zeros(3), sample_spd(3, 0.5, 2.0, &mut rng)).unwrap();
        let e = GwExpansion::new(&distinct, &q).unwrap();
        assert_abs_diff_eq!(
            e.first(&h).unwrap(),
            e.first_with(&h, TiedPairs::Omitted).unwrap(),
            epsilon = 1e-12
        );

        let e = GwExpansion::new(&GaussianMeasure::standard(3), &q).unwrap();
        let gap = (e.first(&h).unwrap() - e.first_with(&h, TiedPairs::Omitted).unwrap()).abs();
        assert!(gap > 1e-3, "gap {gap}");
    }

    #[test]
    fn rejects_mismatched_directions() {
        let p = GaussianMeasure::standard(2);
        let h = PerturbationPair::zeros(3);
        assert!(d_gw(&p, &p, &h).is_err());
        assert!(d_spectral(&ScalarFunction::SQRT, p.cov(), &SymMatrix::identity(3)).is_err());
    }
}
