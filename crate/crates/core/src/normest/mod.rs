//! Sup-norm estimation on ℓ_q balls.
//!
//! [`estimate_norm`] returns a certified *lower* bound of
//! `sup { |p(z)| : ‖z‖_q ≤ 1 }` together with the point that attains it.
//! [`brute_force_norm`] is a slow independent oracle for tiny `n`, and
//! [`bounds`] evaluates the closed-form upper bounds.

mod ascent;
pub mod bounds;
mod oracle;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::seed;
use crate::steinerpoly::{ComplexPoint, SteinerPolynomial};

pub use ascent::{ascend, StartOutcome};
pub use bounds::{analytic_bounds, ksz_polydisk_bound, polarization_constant, BoundSet};
pub use oracle::brute_force_norm;

/// How a [`NormEstimate`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    MultistartAscent,
    GridOracle,
    SamplingOracle,
    Trivial,
}

impl NormMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            NormMethod::MultistartAscent => "multistart_ascent",
            NormMethod::GridOracle => "grid_oracle",
            NormMethod::SamplingOracle => "sampling_oracle",
            NormMethod::Trivial => "trivial",
        }
    }
}

/// A lower bound of a polynomial's sup-norm on the ℓ_q unit ball, with the
/// witness point that attains it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub q: Exponent,
    pub witness: ComplexPoint,
    pub method: NormMethod,
    pub starts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl NormEstimate {
    /// Re-evaluates the witness independently of the optimizer: checks that
    /// `‖witness‖_q ≤ 1 + 1e-12` and that `|p(witness)|` reproduces `value`
    /// to relative error `1e-10`.
    pub fn recertify(&self, p: &SteinerPolynomial) -> bool {
        if self.witness.len() != p.n() || self.witness.q_norm(self.q) > 1.0 + 1e-12 {
            return false;
        }
        let v = p.evaluate_compensated(self.witness.coords()).norm();
        (v - self.value).abs() <= 1e-10 * self.value.max(f64::MIN_POSITIVE)
            || (v == 0.0 && self.value == 0.0)
    }
}

/// Optimizer budget for one norm estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AscentSettings {
    pub starts: usize,
    pub max_iters: usize,
    /// Stop a start when the relative objective gain drops below this.
    pub tol: f64,
}

impl Default for AscentSettings {
    fn default() -> Self {
        AscentSettings {
            starts: 64,
            max_iters: 2000,
            tol: 1e-10,
        }
    }
}

/// Pulls a point back into the closed unit ball after rounding.
pub(crate) fn clamp_to_ball(z: &mut [Complex64], q: Exponent) {
    let moduli: Vec<f64> = z.iter().map(|c| c.norm()).collect();
    let norm = q.norm_of(&moduli);
    if norm > 1.0 {
        z.iter_mut().for_each(|c| *c /= norm);
        // a second division absorbs the rounding of the first
        let moduli: Vec<f64> = z.iter().map(|c| c.norm()).collect();
        let norm = q.norm_of(&moduli);
        if norm > 1.0 {
            z.iter_mut().for_each(|c| *c /= norm * (1.0 + f64::EPSILON));
        }
    }
}

/// Multistart projected gradient ascent on `|p(z)|²`.
///
/// For `q = ∞` each start ascends over the phases of a point on the torus
/// (the maximum is attained there) and finishes with exact coordinate
/// maximisation, which is available because `p` is affine in each variable.
/// For `q < ∞` each start ascends `|p(z)|²/‖z‖_q^{2k}` and is pulled back to
/// the unit `q`-sphere after every step.
///
/// Start `i` is seeded with `derive_seed(seed, [i])`, so the estimate is
/// nondecreasing in `starts`. The best start wins, ties to the lowest index.
pub fn estimate_norm(
    p: &SteinerPolynomial,
    q: Exponent,
    settings: &AscentSettings,
    seed: u64,
) -> Result<NormEstimate> {
    if settings.starts == 0 {
        return Err(Error::domain("estimate_norm needs at least one start"));
    }
    if p.num_terms() == 0 {
        return Ok(NormEstimate {
            value: 0.0,
            q,
            witness: ComplexPoint::zeros(p.n()),
            method: NormMethod::Trivial,
            starts: 0,
            iterations: 0,
            seed,
        });
    }
    let outcomes: Vec<Option<StartOutcome>> = (0..settings.starts)
        .into_par_iter()
        .map(|i| {
            let out = ascend(p, q, settings, seed::derive_seed(seed, &[i as u64]), false);
            if !out.value.is_finite() {
                log::warn!("start {i} produced a non-finite objective; discarded");
                return None;
            }
            Some(out)
        })
        .collect();
    let iterations = outcomes.iter().flatten().map(|o| o.iterations).sum();
    let mut best: Option<StartOutcome> = None;
    for out in outcomes.into_iter().flatten() {
        if best.as_ref().is_none_or(|b| out.value > b.value) {
            best = Some(out);
        }
    }
    let best = best.ok_or(Error::NonConvergence {
        iterations,
        best: f64::NAN,
        residual: f64::NAN,
    })?;
    let mut witness = best.point;
    clamp_to_ball(&mut witness, q);
    let value = p.evaluate_compensated(&witness).norm();
    Ok(NormEstimate {
        value,
        q,
        witness: ComplexPoint::new(witness),
        method: NormMethod::MultistartAscent,
        starts: settings.starts,
        iterations,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{greedy_construct, skolem_construct, Block, PartialSteinerSystem};
    use crate::steinerpoly::{random_signs, SignPattern};

    fn poly(n: usize, k: usize, blocks: &[&[usize]], signs: &[i8]) -> SteinerPolynomial {
        let system =
            PartialSteinerSystem::new(n, k, k - 1, blocks.iter().map(|b| Block::from(*b)).collect())
                .unwrap();
        SteinerPolynomial::new(system, SignPattern::new(signs.to_vec()).unwrap()).unwrap()
    }

    fn quick() -> AscentSettings {
        AscentSettings {
            starts: 16,
            max_iters: 2000,
            tol: 1e-12,
        }
    }

    #[test]
    fn single_monomial_values() {
        let p = poly(3, 3, &[&[0, 1, 2]], &[1]);
        let inf = estimate_norm(&p, Exponent::INFINITY, &quick(), 1).unwrap();
        assert!((inf.value - 1.0).abs() < 1e-12);
        let one = estimate_norm(&p, Exponent::ONE, &quick(), 1).unwrap();
        assert!((one.value - 1.0 / 27.0).abs() < 1e-9, "{}", one.value);
        let two = estimate_norm(&p, Exponent::TWO, &quick(), 1).unwrap();
        assert!((two.value - 3f64.powf(-1.5)).abs() < 1e-9, "{}", two.value);
        for e in [&inf, &one, &two] {
            assert!(e.recertify(&p));
            assert_eq!(e.method, NormMethod::MultistartAscent);
        }
    }

    #[test]
    fn general_q_single_monomial() {
        // by symmetry the optimum splits the budget evenly: |z_j| = 3^{-1/q}
        let p = poly(3, 3, &[&[0, 1, 2]], &[1]);
        let q = Exponent::new(3.0).unwrap();
        let est = estimate_norm(&p, q, &quick(), 4).unwrap();
        assert!((est.value - 1.0 / 3.0).abs() < 1e-9, "{}", est.value);
    }

    #[test]
    fn empty_polynomial_is_trivial() {
        let p = SteinerPolynomial::new(
            PartialSteinerSystem::empty(4, 3).unwrap(),
            SignPattern::all_positive(0),
        )
        .unwrap();
        let est = estimate_norm(&p, Exponent::TWO, &quick(), 0).unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.method, NormMethod::Trivial);
    }

    #[test]
    fn rejects_zero_starts() {
        let p = poly(3, 3, &[&[0, 1, 2]], &[1]);
        let s = AscentSettings { starts: 0, ..quick() };
        assert!(estimate_norm(&p, Exponent::TWO, &s, 0).is_err());
    }

    #[test]
    fn deterministic_and_monotone_in_starts() {
        let s = skolem_construct(13).unwrap();
        let p = SteinerPolynomial::new(s.clone(), random_signs(&s, 8)).unwrap();
        for q in [Exponent::INFINITY, Exponent::TWO] {
            let mut prev = 0.0;
            for starts in [1, 2, 4, 8] {
                let set = AscentSettings { starts, max_iters: 300, tol: 1e-10 };
                let a = estimate_norm(&p, q, &set, 42).unwrap();
                let b = estimate_norm(&p, q, &set, 42).unwrap();
                assert_eq!(a, b);
                assert!(a.value >= prev);
                assert!(a.recertify(&p));
                prev = a.value;
            }
        }
    }

    #[test]
    fn matches_oracle_on_sts7() {
        let s = skolem_construct(7).unwrap();
        let p = SteinerPolynomial::new(s.clone(), random_signs(&s, 5)).unwrap();
        let est = estimate_norm(&p, Exponent::INFINITY, &AscentSettings::default(), 3).unwrap();
        let oracle = brute_force_norm(&p, Exponent::INFINITY, 16).unwrap();
        assert!(est.value <= 7.0 + 1e-9);
        assert!(
            (est.value - oracle.value).abs() <= 0.02 * oracle.value,
            "ascent {} vs oracle {}",
            est.value,
            oracle.value
        );
    }

    #[test]
    fn l1_and_matching_ceilings() {
        for seed in 0..6 {
            let s = greedy_construct(12, 3, seed).unwrap();
            let p = SteinerPolynomial::new(s.clone(), random_signs(&s, seed)).unwrap();
            let est = estimate_norm(&p, Exponent::ONE, &quick(), seed).unwrap();
            assert!(est.value <= 1.0 / 6.0 + 1e-9, "{}", est.value);
            let m = greedy_construct(14, 2, seed).unwrap();
            let pm = SteinerPolynomial::new(m.clone(), random_signs(&m, seed)).unwrap();
            let est = estimate_norm(&pm, Exponent::TWO, &quick(), seed).unwrap();
            assert!(est.value <= 0.5 + 1e-9, "{}", est.value);
            // a matching attains 1/2 on a single edge
            assert!(est.value >= 0.5 - 1e-9, "{}", est.value);
        }
    }

    #[test]
    fn ascent_objective_is_nondecreasing() {
        let s = greedy_construct(15, 3, 1).unwrap();
        let p = SteinerPolynomial::new(s.clone(), random_signs(&s, 1)).unwrap();
        for q in [Exponent::ONE, Exponent::TWO, Exponent::new(4.0).unwrap(), Exponent::INFINITY] {
            for start in 0..5 {
                let out = ascend(&p, q, &AscentSettings::default(), start, true);
                let trace = out.trace.unwrap();
                assert!(!trace.is_empty());
                assert!(trace.windows(2).all(|w| w[1] >= w[0]), "q = {q}");
            }
        }
    }
}
