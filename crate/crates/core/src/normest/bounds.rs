//! Closed-form norm bounds for Steiner unimodular polynomials.
//!
//! Every `log` is the natural logarithm.

use serde::Serialize;

use crate::designs::binomial;
use crate::error::{Error, Result};
use crate::exponent::Exponent;

/// Ceiling for the Kahane–Salem–Zygmund absolute constant.
pub const KSZ_CONSTANT: f64 = 8.0;
pub const DEFAULT_K: f64 = 1.0;
pub const DEFAULT_M: f64 = 2.0;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `D·(n·ln k·m)^{1/2}`: the polydisk norm bound met by some choice of signs
/// for a `k`-homogeneous polynomial with `m` unimodular terms.
pub fn ksz_polydisk_bound(n: usize, k: usize, m: usize) -> f64 {
    KSZ_CONSTANT * (n as f64 * (k as f64).ln() * m as f64).sqrt()
}

/// `λ(k, q)`: ratio between the sup of the symmetric `k`-linear form and the
/// polynomial norm. Exact at `q = 2`, the general ceiling `k^k/k!` elsewhere,
/// and the sharper polydisk value at `q = ∞`.
pub fn polarization_constant(k: usize, q: Exponent) -> f64 {
    let kf = k as f64;
    if q.value() == 2.0 {
        1.0
    } else if q.is_infinite() {
        kf.powf(kf / 2.0) * (kf + 1.0).powf((kf + 1.0) / 2.0) / (2f64.powi(k as i32) * factorial(k))
    } else {
        kf.powf(kf) / factorial(k)
    }
}

/// Analytic bounds for `k`, `q`, `n` with constants `K` and `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSet {
    /// KSZ bound for a maximal `S_p(k−1, k, n)`: `D (ln k/k · C(n, k−1) · n)^{1/2}`.
    pub ksz_infty: f64,
    /// Upper bound on `‖p‖_{P(ᵏℓ_qⁿ)}` for well-chosen signs.
    pub thm26_upper: f64,
    /// `1/k!`, valid for every Steiner unimodular polynomial at `q = 1`.
    pub l1_upper: f64,
    /// `M·k·K·ln^{3/2} n`.
    pub ell2_upper_form: f64,
    pub polarization: f64,
}

pub fn analytic_bounds(k: usize, q: Exponent, n: usize, k_const: f64, m_const: f64) -> Result<BoundSet> {
    if k < 2 || n < 2 {
        return Err(Error::domain(format!("need k >= 2 and n >= 2, got k = {k}, n = {n}")));
    }
    if !(k_const > 0.0) || !(m_const > 1.0) {
        return Err(Error::domain(format!(
            "need K > 0 and M > 1, got K = {k_const}, M = {m_const}"
        )));
    }
    let (kf, nf) = (k as f64, n as f64);
    let log_n = nf.ln();
    let ell2 = m_const * kf * k_const * log_n.powf(1.5);
    let qv = q.value();
    let thm26 = if qv >= 2.0 {
        let r = q.reciprocal();
        let e = 1.0 - 2.0 * r;
        let inner = kf.powf(kf / 2.0) * (kf + 1.0).powf((kf + 1.0) / 2.0) * kf.ln().sqrt()
            / (2f64.powi(k as i32) * factorial(k) * factorial(k).sqrt());
        let a = (m_const * k_const).max(KSZ_CONSTANT) * inner.powf(e) * kf.powf(2.0 * r);
        a * log_n.powf(3.0 * r) * nf.powf(kf / 2.0 * e)
    } else {
        (kf.powf(kf) / factorial(k).powi(2)).powf((2.0 - qv) / qv) * ell2.powf((2.0 * qv - 2.0) / qv)
    };
    let max_blocks = binomial(n as u64, k as u64 - 1) as f64 / kf;
    Ok(BoundSet {
        ksz_infty: KSZ_CONSTANT * (kf.ln() * max_blocks * nf).sqrt(),
        thm26_upper: thm26,
        l1_upper: 1.0 / factorial(k),
        ell2_upper_form: ell2,
        polarization: polarization_constant(k, q),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ksz_examples() {
        assert_relative_eq!(ksz_polydisk_bound(10, 3, 12), 91.86, epsilon = 5e-3);
        assert_eq!(ksz_polydisk_bound(10, 3, 0), 0.0);
        // with ln k = 1 the bound is 8·sqrt(n·m)
        let e_like = KSZ_CONSTANT * (4.0f64 * 1.0 * 1.0).sqrt();
        assert_eq!(e_like, 16.0);
    }

    #[test]
    fn polarization_examples() {
        assert_eq!(polarization_constant(3, Exponent::TWO), 1.0);
        assert_eq!(polarization_constant(2, Exponent::new(3.0).unwrap()), 2.0);
        assert_relative_eq!(
            polarization_constant(2, Exponent::INFINITY),
            3.0 * 3f64.sqrt() / 4.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(polarization_constant(3, Exponent::ONE), 4.5, epsilon = 1e-14);
    }

    #[test]
    fn l1_bound_is_inverse_factorial() {
        let b = analytic_bounds(3, Exponent::ONE, 10, DEFAULT_K, DEFAULT_M).unwrap();
        assert_relative_eq!(b.l1_upper, 1.0 / 6.0);
        let b = analytic_bounds(4, Exponent::ONE, 10, DEFAULT_K, DEFAULT_M).unwrap();
        assert_relative_eq!(b.l1_upper, 1.0 / 24.0);
    }

    #[test]
    fn q2_degenerates_to_ell2_form() {
        // the max{MK, D} prefactor coincides with MK once MK >= D
        let b = analytic_bounds(3, Exponent::TWO, 50, 4.0, 2.0).unwrap();
        assert_relative_eq!(b.thm26_upper, b.ell2_upper_form, max_relative = 1e-14);
        // the q < 2 branch approaches the same form from below
        let below = analytic_bounds(3, Exponent::new(2.0 - 1e-12).unwrap(), 50, 1.0, 2.0).unwrap();
        assert_relative_eq!(below.thm26_upper, below.ell2_upper_form, max_relative = 1e-9);
    }

    #[test]
    fn infinite_q_growth_exponent() {
        let b1 = analytic_bounds(3, Exponent::INFINITY, 100, 1.0, 2.0).unwrap();
        let b2 = analytic_bounds(3, Exponent::INFINITY, 400, 1.0, 2.0).unwrap();
        let slope = (b2.thm26_upper / b1.thm26_upper).ln() / 4f64.ln();
        assert_relative_eq!(slope, 1.5, epsilon = 1e-12);
        let near = analytic_bounds(3, Exponent::new(1e12).unwrap(), 100, 1.0, 2.0).unwrap();
        assert_relative_eq!(near.thm26_upper, b1.thm26_upper, max_relative = 1e-9);
    }

    #[test]
    fn bounds_are_finite_and_nonnegative() {
        for k in 2..6 {
            for q in [1.0, 1.5, 2.0, 3.0, 8.0, f64::INFINITY] {
                let b = analytic_bounds(k, Exponent::new(q).unwrap(), 30, 1.0, 2.0).unwrap();
                for v in [b.ksz_infty, b.thm26_upper, b.l1_upper, b.ell2_upper_form, b.polarization] {
                    assert!(v.is_finite() && v >= 0.0, "k={k} q={q}: {b:?}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(analytic_bounds(1, Exponent::TWO, 10, 1.0, 2.0).is_err());
        assert!(analytic_bounds(3, Exponent::TWO, 10, 0.0, 2.0).is_err());
        assert!(analytic_bounds(3, Exponent::TWO, 10, 1.0, 1.0).is_err());
        assert!("0.9".parse::<Exponent>().is_err());
    }
}
