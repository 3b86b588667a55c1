//! Elliptical extension demo. For any two measures with finite second
//! moments, `W₂²` is bounded below by `GW` of the Gaussians with the same
//! means and covariances. The demo checks the bound on multivariate-t
//! clouds, using the entropic transport cost as a computable upper proxy
//! for their `W₂²`.

use gw_core::symmat::spd_sqrt;
use gw_core::{Error, Matrix, Result, SampleSet, SpdMatrix, Vector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

/// `n` draws of `μ + S^{1/2} z / √(W/ν)` with `z ∼ N(0, I)` and `W ∼ χ²_ν`.
/// The covariance is `ν/(ν−2)·S`; `ν < 2` is rejected because the second
/// moment then does not exist.
pub fn sample_multivariate_t<R: Rng + ?Sized>(
    mean: &Vector,
    scale: &SpdMatrix,
    dof: f64,
    n: usize,
    rng: &mut R,
) -> Result<SampleSet> {
    if !(dof >= 2.0 && dof.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "degrees of freedom {dof} must be at least 2"
        )));
    }
    let d = scale.dim();
    if mean.len() != d {
        return Err(Error::InvalidInput(format!(
            "mean has length {}, scale is {d}x{d}",
            mean.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("need at least one draw".into()));
    }
    let root = spd_sqrt(scale);
    let chi = ChiSquared::new(dof).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut rows = Matrix::zeros(n, d);
    for i in 0..n {
        let z = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w: f64 = chi.sample(rng);
        let x = mean + root.matrix() * z * (dof / w).sqrt();
        rows.row_mut(i).copy_from(&x.transpose());
    }
    SampleSet::new(rows)
}

/// Result of an entropic transport solve between two uniform clouds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornResult {
    /// `⟨π, C⟩` for the returned plan with squared Euclidean cost.
    pub transport_cost: f64,
    pub iterations: usize,
    /// Largest absolute marginal error of the plan at exit.
    pub marginal_error: f64,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn iterations between uniform measures on the rows of
/// `x` and `y`, regularization `epsilon` in units of the cost.
pub fn sinkhorn(x: &SampleSet, y: &SampleSet, epsilon: f64, tol: f64, max_iter: usize) -> Result<SinkhornResult> {
    if x.dim() != y.dim() {
        return Err(Error::InvalidInput("clouds have different dimensions".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "regularization {epsilon} must be positive"
        )));
    }
    let (n, m) = (x.n(), y.n());
    let (xr, yr) = (x.rows(), y.rows());
    let cost = Matrix::from_fn(n, m, |i, j| (xr.row(i) - yr.row(j)).norm_squared());
    let (log_a, log_b) = (-(n as f64).ln(), -(m as f64).ln());
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut iterations = 0;
    let mut marginal_error = f64::INFINITY;
    while iterations < max_iter {
        iterations += 1;
        for i in 0..n {
            f[i] = -epsilon * log_sum_exp((0..m).map(|j| (g[j] - cost[(i, j)]) / epsilon + log_b));
        }
        for j in 0..m {
            g[j] = -epsilon * log_sum_exp((0..n).map(|i| (f[i] - cost[(i, j)]) / epsilon + log_a));
        }
        // column marginals are exact after the g-update; check the rows
        marginal_error = (0..n)
            .map(|i| {
                let row: f64 = (0..m)
                    .map(|j| ((f[i] + g[j] - cost[(i, j)]) / epsilon + log_a + log_b).exp())
                    .sum();
                (row - 1.0 / n as f64).abs()
            })
            .fold(0.0, f64::max);
        if marginal_error <= tol / n as f64 {
            break;
        }
    }
    let mut transport_cost = 0.0;
    for i in 0..n {
        for j in 0..m {
            let c = cost[(i, j)];
            transport_cost += ((f[i] + g[j] - c) / epsilon + log_a + log_b).exp() * c;
        }
    }
    Ok(SinkhornResult {
        transport_cost,
        iterations,
        marginal_error,
    })
}
