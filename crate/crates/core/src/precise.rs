//! Double-double evaluation of `Φ` for finite-difference checks.
//!
//! Uses a different route from [`crate::gw::gw2`]: with `A = LLᵗ`,
//! `tr (A^{1/2}BA^{1/2})^{1/2} = Σ √λᵢ(LᵗBL)`, the eigenvalues coming from
//! cyclic Jacobi sweeps carried out in double-double arithmetic.

use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::frechet::PerturbationPair;
use crate::gw::GaussianMeasure;

type Dd = TwoFloat;

/// `a / b` to full double-double accuracy; the crate's own division and
/// reciprocal stop at `f64` precision.
fn div(a: Dd, b: Dd) -> Dd {
    let x = Dd::from(1.0 / b.hi());
    let x = x + x * (Dd::from(1.0) - b * x);
    let q = a * x;
    q + x * (a - b * q)
}

fn recip(b: Dd) -> Dd {
    div(Dd::from(1.0), b)
}

struct DdMatrix {
    d: usize,
    a: Vec<Dd>,
}

impl DdMatrix {
    fn zeros(d: usize) -> Self {
        DdMatrix {
            d,
            a: vec![Dd::from(0.0); d * d],
        }
    }

    fn at(&self, i: usize, j: usize) -> Dd {
        self.a[i * self.d + j]
    }

    fn set(&mut self, i: usize, j: usize, v: Dd) {
        self.a[i * self.d + j] = v;
    }
}

/// `M + εH` formed in double-double.
fn displaced(m: &crate::symmat::Matrix, h: &crate::symmat::Matrix, eps: f64) -> DdMatrix {
    let d = m.nrows();
    let mut out = DdMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            out.set(i, j, Dd::from(m[(i, j)]) + Dd::new_mul(eps, h[(i, j)]));
        }
    }
    out
}

fn cholesky(a: &DdMatrix) -> Result<DdMatrix> {
    let d = a.d;
    let mut l = DdMatrix::zeros(d);
    for j in 0..d {
        let mut diag = a.at(j, j);
        for k in 0..j {
            diag -= l.at(j, k) * l.at(j, k);
        }
        if diag.hi().is_nan() || diag <= 0.0 {
            return Err(Error::NotSpd {
                min_eigenvalue: diag.hi(),
                tolerance: 0.0,
            });
        }
        let root = diag.sqrt();
        l.set(j, j, root);
        for i in j + 1..d {
            let mut v = a.at(i, j);
            for k in 0..j {
                v -= l.at(i, k) * l.at(j, k);
            }
            l.set(i, j, div(v, root));
        }
    }
    Ok(l)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(mut a: DdMatrix) -> Vec<Dd> {
    let d = a.d;
    let norm: f64 = a.a.iter().map(|v| v.hi() * v.hi()).sum::<f64>().sqrt();
    for _ in 0..64 {
        let mut off = 0.0;
        for p in 0..d {
            for q in p + 1..d {
                off += a.at(p, q).hi().abs();
            }
        }
        if off <= 1e-32 * norm {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a.at(p, q);
                if apq.hi() == 0.0 {
                    continue;
                }
                let theta = div(a.at(q, q) - a.at(p, p), apq * 2.0);
                let root = (theta * theta + 1.0).sqrt();
                let t = if theta >= 0.0 {
                    recip(theta + root)
                } else {
                    -recip(root - theta)
                };
                let c = recip((t * t + 1.0).sqrt());
                let s = t * c;
                for k in 0..d {
                    let (akp, akq) = (a.at(k, p), a.at(k, q));
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..d {
                    let (apk, aqk) = (a.at(p, k), a.at(q, k));
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    (0..d).map(|i| a.at(i, i)).collect()
}

/// `Φ(θ + εh)` in double-double.
pub(crate) fn phi_displaced(p: &GaussianMeasure, q: &GaussianMeasure, h: &PerturbationPair, eps: f64) -> Result<Dd> {
    let d = p.dim();
    let mut value = Dd::from(0.0);
    for i in 0..d {
        let gap =
            Dd::from(p.mean()[i]) + Dd::new_mul(eps, h.dmu[i]) - Dd::from(q.mean()[i]) - Dd::new_mul(eps, h.dnu[i]);
        value += gap * gap;
    }
    let a = displaced(p.cov().matrix(), h.dsigma.as_matrix(), eps);
    let b = displaced(q.cov().matrix(), h.dxi.as_matrix(), eps);
    for i in 0..d {
        value += a.at(i, i) + b.at(i, i);
    }
    let l = cholesky(&a)?;
    // C = Lᵗ B L
    let mut bl = DdMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let mut s = Dd::from(0.0);
            for k in j..d {
                s += b.at(i, k) * l.at(k, j);
            }
            bl.set(i, j, s);
        }
    }
    let mut c = DdMatrix::zeros(d);
    for i in 0..d {
        for j in 0..=i {
            let mut s = Dd::from(0.0);
            for k in i..d {
                s += l.at(k, i) * bl.at(k, j);
            }
            c.set(i, j, s);
            c.set(j, i, s);
        }
    }
    for lambda in jacobi_eigenvalues(c) {
        if lambda < 0.0 {
            return Err(Error::DomainError(format!(
                "negative eigenvalue {:e} in LᵗBL",
                lambda.hi()
            )));
        }
        value -= lambda.sqrt() * 2.0;
    }
    Ok(value)
}

/// `GW(P, Q)` in double-double, rounded to the nearest `f64`.
pub fn gw2_extended(p: &GaussianMeasure, q: &GaussianMeasure) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::InvalidInput("measures have different dimensions".into()));
    }
    Ok(phi_displaced(p, q, &PerturbationPair::zeros(p.dim()), 0.0)?.hi())
}

/// Taylor remainders `Φ(θ+εh) − Φ(θ) − εD` and `… − ½ε²D²`, computed in
/// double-double before rounding.
pub(crate) fn taylor_remainders(
    p: &GaussianMeasure,
    q: &GaussianMeasure,
    h: &PerturbationPair,
    eps: f64,
    d1: f64,
    d2: f64,
) -> Result<(f64, f64)> {
    let base = phi_displaced(p, q, h, 0.0)?;
    let moved = phi_displaced(p, q, h, eps)?;
    let r1 = moved - base - Dd::new_mul(eps, d1);
    let r2 = r1 - Dd::new_mul(0.5 * eps * eps, d2);
    Ok((r1.hi(), r2.hi()))
}
