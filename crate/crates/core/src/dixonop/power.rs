use rand_distr::{Distribution, StandardNormal};

use super::sparse::IntSparseOperator;
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITERS: usize = 100_000;
const START_SEED: u64 = 0x9E37_0001;

fn normalize(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

/// Spectral norm by power iteration on `AᵀA` from a fixed seeded start.
///
/// With `x` a unit vector, `ν = ‖AᵀA x‖` never exceeds `‖A‖²`, so `√ν` is a
/// lower bound at every step. Iteration stops once `ν` changes by at most
/// `tol·ν` and the Rayleigh quotient `‖Ax‖²` agrees with `ν` to `tol`. The
/// result is never below the largest column norm.
pub fn operator_norm(a: &IntSparseOperator, tol: f64, max_iters: usize) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    let floor = (a.max_column_norm_sq() as f64).sqrt();
    if a.nnz() == 0 {
        return Ok(0.0);
    }
    let dim = a.dim();
    let mut rng = seed::rng(seed::derive_seed(START_SEED, &[dim as u64]));
    let mut x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut x);
    let mut y = vec![0.0; dim];
    let mut nu_prev = 0.0;
    let mut best = 0.0_f64;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        a.matvec_f64(&x, &mut y);
        let rayleigh = y.iter().map(|v| v * v).sum::<f64>();
        a.matvec_transpose_f64(&y, &mut x);
        let nu = normalize(&mut x);
        if nu == 0.0 {
            return Ok(floor);
        }
        best = best.max(nu);
        residual = (nu - rayleigh) / nu;
        if (nu - nu_prev).abs() <= tol * nu && residual <= tol {
            return Ok(best.sqrt().max(floor));
        }
        nu_prev = nu;
    }
    Err(Error::NonConvergence {
        iterations: max_iters,
        best: best.sqrt().max(floor),
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn small_matrices() {
        assert_eq!(operator_norm(&IntSparseOperator::zero(4), 1e-9, 10).unwrap(), 0.0);
        let a = IntSparseOperator::from_triplets(2, [(0, 0, 1), (0, 1, 1)]).unwrap();
        assert_relative_eq!(operator_norm(&a, 1e-9, 1000).unwrap(), 2f64.sqrt(), epsilon = 1e-9);
        // [[2, 1], [1, 2]] has eigenvalues 3 and 1
        let b = IntSparseOperator::from_triplets(2, [(0, 0, 2), (0, 1, 1), (1, 0, 1), (1, 1, 2)]).unwrap();
        assert_relative_eq!(operator_norm(&b, 1e-12, 1000).unwrap(), 3.0, epsilon = 1e-9);
        let nilpotent = IntSparseOperator::from_triplets(3, [(1, 0, 1), (2, 1, 1)]).unwrap();
        assert_eq!(operator_norm(&nilpotent, 1e-9, 1000).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_tolerance_and_reports_non_convergence() {
        let b = IntSparseOperator::from_triplets(2, [(0, 0, 3), (1, 1, 2)]).unwrap();
        assert!(operator_norm(&b, 0.0, 10).is_err());
        match operator_norm(&b, 1e-15, 2) {
            Err(Error::NonConvergence { iterations, best, .. }) => {
                assert_eq!(iterations, 2);
                assert!(best >= 3.0 - 1e-12 && best <= 3.0 + 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
