//! Steiner unimodular polynomials `p(z) = Σ_{J∈S} c_J z_J` with `c_J = ±1`
//! supported on the blocks of a partial Steiner system.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::designs::{parse_system_lines, Block, PartialSteinerSystem};
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::normest::{self, AscentSettings, NormEstimate};
use crate::seed;

/// Above this many terms evaluation switches to compensated summation.
pub const COMPENSATED_SUM_THRESHOLD: usize = 10_000;

/// One ±1 sign per block, aligned with the system's canonical block order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignPattern(Vec<i8>);

impl SignPattern {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if let Some(i) = signs.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::validation(format!(
                "sign {i} is {}, expected +1 or -1",
                signs[i]
            )));
        }
        Ok(SignPattern(signs))
    }

    pub fn all_positive(len: usize) -> Self {
        SignPattern(vec![1; len])
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A point of `ℂⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexPoint(pub Vec<Complex64>);

impl ComplexPoint {
    pub fn new(coords: Vec<Complex64>) -> Self {
        ComplexPoint(coords)
    }

    pub fn ones(n: usize) -> Self {
        ComplexPoint(vec![Complex64::new(1.0, 0.0); n])
    }

    pub fn zeros(n: usize) -> Self {
        ComplexPoint(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.0
    }

    pub fn q_norm(&self, q: Exponent) -> f64 {
        let moduli: Vec<f64> = self.0.iter().map(|c| c.norm()).collect();
        q.norm_of(&moduli)
    }
}

/// Neumaier-compensated accumulator for complex sums.
#[derive(Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    re: (f64, f64),
    im: (f64, f64),
}

impl CompensatedSum {
    fn add_part((sum, comp): &mut (f64, f64), x: f64) {
        let t = *sum + x;
        if sum.abs() >= x.abs() {
            *comp += (*sum - t) + x;
        } else {
            *comp += (x - t) + *sum;
        }
        *sum = t;
    }

    pub(crate) fn add(&mut self, z: Complex64) {
        Self::add_part(&mut self.re, z.re);
        Self::add_part(&mut self.im, z.im);
    }

    pub(crate) fn value(&self) -> Complex64 {
        Complex64::new(self.re.0 + self.re.1, self.im.0 + self.im.1)
    }
}

/// A `k`-homogeneous tetrahedral polynomial with ±1 coefficients on the
/// blocks of an `S_p(k−1, k, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteinerPolynomial {
    system: PartialSteinerSystem,
    signs: SignPattern,
    /// For each variable, the indices of the blocks containing it.
    incidence: Vec<Vec<usize>>,
}

impl SteinerPolynomial {
    pub fn new(system: PartialSteinerSystem, signs: SignPattern) -> Result<Self> {
        if signs.len() != system.len() {
            return Err(Error::validation(format!(
                "{} signs for {} blocks",
                signs.len(),
                system.len()
            )));
        }
        if system.t() + 1 != system.k() {
            return Err(Error::validation(format!(
                "Steiner polynomials need t = k - 1, got t = {}, k = {}",
                system.t(),
                system.k()
            )));
        }
        let mut incidence = vec![Vec::new(); system.n()];
        for (bi, b) in system.blocks().iter().enumerate() {
            for &j in b.elements() {
                incidence[j].push(bi);
            }
        }
        Ok(SteinerPolynomial {
            system,
            signs,
            incidence,
        })
    }

    pub fn system(&self) -> &PartialSteinerSystem {
        &self.system
    }

    pub fn signs(&self) -> &SignPattern {
        &self.signs
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn degree(&self) -> usize {
        self.system.k()
    }

    pub fn num_terms(&self) -> usize {
        self.system.len()
    }

    /// `(block, sign)` pairs in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (&Block, i8)> {
        self.system
            .blocks()
            .iter()
            .zip(self.signs.as_slice().iter().copied())
    }

    pub(crate) fn blocks_containing(&self, j: usize) -> &[usize] {
        &self.incidence[j]
    }

    fn check_dim(&self, z: &ComplexPoint) -> Result<()> {
        if z.len() != self.n() {
            return Err(Error::validation(format!(
                "point has {} coordinates, polynomial has n = {}",
                z.len(),
                self.n()
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self, z: &ComplexPoint) -> Result<Complex64> {
        self.check_dim(z)?;
        Ok(self.evaluate_unchecked(z.coords()))
    }

    pub(crate) fn evaluate_unchecked(&self, z: &[Complex64]) -> Complex64 {
        let monomial = |(b, s): (&Block, i8)| {
            let prod = b
                .elements()
                .iter()
                .fold(Complex64::new(1.0, 0.0), |acc, &j| acc * z[j]);
            prod * f64::from(s)
        };
        if self.num_terms() > COMPENSATED_SUM_THRESHOLD {
            self.evaluate_compensated(z)
        } else {
            self.terms().map(monomial).sum()
        }
    }

    /// Evaluation with compensated summation regardless of size; used for
    /// witness recertification.
    pub fn evaluate_compensated(&self, z: &[Complex64]) -> Complex64 {
        let mut acc = CompensatedSum::default();
        for (b, s) in self.terms() {
            let prod = b
                .elements()
                .iter()
                .fold(Complex64::new(1.0, 0.0), |acc, &j| acc * z[j]);
            acc.add(prod * f64::from(s));
        }
        acc.value()
    }

    /// `p(z)` together with all partial derivatives `∂p/∂z_j`.
    pub(crate) fn value_and_partials(&self, z: &[Complex64], partials: &mut [Complex64]) -> Complex64 {
        let k = self.degree();
        partials.iter_mut().for_each(|d| *d = Complex64::new(0.0, 0.0));
        let mut value = Complex64::new(0.0, 0.0);
        let mut prefix = vec![Complex64::new(1.0, 0.0); k + 1];
        for (b, s) in self.terms() {
            let e = b.elements();
            for i in 0..k {
                prefix[i + 1] = prefix[i] * z[e[i]];
            }
            let s = f64::from(s);
            value += prefix[k] * s;
            let mut suffix = Complex64::new(s, 0.0);
            for i in (0..k).rev() {
                partials[e[i]] += prefix[i] * suffix;
                suffix *= z[e[i]];
            }
        }
        value
    }

    /// Gradient of `|p(z)|²` with respect to the `2n` real coordinates,
    /// laid out as `[∂/∂Re z_0, …, ∂/∂Re z_{n−1}, ∂/∂Im z_0, …, ∂/∂Im z_{n−1}]`.
    pub fn gradient_sq_modulus(&self, z: &ComplexPoint) -> Result<Vec<f64>> {
        self.check_dim(z)?;
        let n = self.n();
        let mut partials = vec![Complex64::new(0.0, 0.0); n];
        let p = self.value_and_partials(z.coords(), &mut partials);
        let mut grad = vec![0.0; 2 * n];
        for (j, a) in partials.iter().enumerate() {
            let w = p.conj() * a;
            grad[j] = 2.0 * w.re;
            grad[n + j] = -2.0 * w.im;
        }
        Ok(grad)
    }

    /// The same polynomial with variable `j` renamed to `perm[j]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::validation("relabeling is not a permutation of 0..n"));
        }
        let mut pairs: Vec<(Block, i8)> = self
            .terms()
            .map(|(b, s)| (Block::new(b.elements().iter().map(|&j| perm[j]).collect()), s))
            .collect();
        pairs.sort();
        let (blocks, signs): (Vec<Block>, Vec<i8>) = pairs.into_iter().unzip();
        let system = PartialSteinerSystem::new(n, self.degree(), self.system.t(), blocks)?;
        SteinerPolynomial::new(system, SignPattern(signs))
    }

    /// System file followed by one line of signs.
    pub fn to_text(&self) -> String {
        let mut s = self.system.to_text();
        let signs: Vec<&str> = self
            .signs
            .as_slice()
            .iter()
            .map(|&c| if c > 0 { "+1" } else { "-1" })
            .collect();
        let _ = writeln!(s, "{}", signs.join(" "));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let (system, used) = parse_system_lines(&lines)?;
        let signs: Vec<i8> = match &lines[used..] {
            [] if system.is_empty() => Vec::new(),
            [line] => line
                .split_whitespace()
                .map(|f| match f {
                    "+1" | "1" => Ok(1),
                    "-1" => Ok(-1),
                    other => Err(Error::validation(format!("bad sign '{other}'"))),
                })
                .collect::<Result<_>>()?,
            [] => return Err(Error::validation("missing sign line")),
            _ => return Err(Error::validation("expected exactly one sign line after the blocks")),
        };
        SteinerPolynomial::new(system, SignPattern::new(signs)?)
    }
}

/// Independent fair ±1 signs, one per block, determined by `seed`.
pub fn random_signs(system: &PartialSteinerSystem, seed: u64) -> SignPattern {
    let mut rng = seed::rng(seed);
    SignPattern((0..system.len()).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect())
}

/// Seed used for the signs of round `round` of [`best_of_signs`].
pub fn round_seed(seed: u64, round: usize) -> u64 {
    seed::derive_seed(seed, &[0x5167_5EED, round as u64])
}

/// Budgets for the sign search: a cheap screening estimate per round and a
/// full estimate for the winner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignSearch {
    pub rounds: usize,
    pub screen: AscentSettings,
    pub full: AscentSettings,
}

impl SignSearch {
    /// Screening budget derived from the full one: an eighth of the starts
    /// (at least 4) and a quarter of the iterations.
    pub fn from_full(rounds: usize, full: AscentSettings) -> Self {
        SignSearch {
            rounds,
            screen: AscentSettings {
                starts: (full.starts / 8).max(4).min(full.starts),
                max_iters: (full.max_iters / 4).max(50).min(full.max_iters),
                tol: full.tol.max(1e-8),
            },
            full,
        }
    }
}

/// Draws `rounds` sign patterns and keeps the one with the smallest screened
/// `q`-norm estimate (ties to the lowest round). The winner is re-estimated
/// at the full budget. With one round the screen is skipped entirely.
///
/// This is a search heuristic: nothing guarantees the winner attains the
/// probabilistic norm bounds.
pub fn best_of_signs(
    system: &PartialSteinerSystem,
    q: Exponent,
    search: &SignSearch,
    seed: u64,
) -> Result<(SteinerPolynomial, NormEstimate)> {
    if search.rounds == 0 {
        return Err(Error::domain("best_of_signs needs at least one round"));
    }
    let estimate_seed = |round: usize| seed::derive_seed(seed, &[0xE571, round as u64]);
    let mut best: Option<(usize, f64, SteinerPolynomial)> = None;
    if search.rounds == 1 {
        let p = SteinerPolynomial::new(system.clone(), random_signs(system, round_seed(seed, 0)))?;
        best = Some((0, 0.0, p));
    } else {
        for round in 0..search.rounds {
            let p = SteinerPolynomial::new(
                system.clone(),
                random_signs(system, round_seed(seed, round)),
            )?;
            let est = normest::estimate_norm(&p, q, &search.screen, estimate_seed(round))?;
            if best.as_ref().is_none_or(|(_, v, _)| est.value < *v) {
                best = Some((round, est.value, p));
            }
        }
    }
    let (round, _, p) = best.expect("at least one round");
    let est = normest::estimate_norm(&p, q, &search.full, estimate_seed(round))?;
    Ok((p, est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{bose_construct, greedy_construct, skolem_construct};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn poly(n: usize, k: usize, blocks: &[&[usize]], signs: &[i8]) -> SteinerPolynomial {
        let system =
            PartialSteinerSystem::new(n, k, k - 1, blocks.iter().map(|b| Block::from(*b)).collect())
                .unwrap();
        SteinerPolynomial::new(system, SignPattern::new(signs.to_vec()).unwrap()).unwrap()
    }

    fn random_point(n: usize, seed: u64) -> ComplexPoint {
        let mut rng = seed::rng(seed);
        ComplexPoint(
            (0..n)
                .map(|_| c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                .collect(),
        )
    }

    #[test]
    fn evaluate_examples() {
        let p = poly(3, 3, &[&[0, 1, 2]], &[1]);
        assert_eq!(p.evaluate(&ComplexPoint::ones(3)).unwrap(), c(1.0, 0.0));
        assert_eq!(
            p.evaluate(&ComplexPoint(vec![c(0.0, 2.0), c(1.0, 0.0), c(1.0, 0.0)]))
                .unwrap(),
            c(0.0, 2.0)
        );
        let q = poly(5, 3, &[&[0, 1, 2], &[0, 3, 4]], &[1, -1]);
        assert_eq!(q.evaluate(&ComplexPoint::ones(5)).unwrap(), c(0.0, 0.0));
        assert!(q.evaluate(&ComplexPoint::ones(4)).is_err());
    }

    #[test]
    fn gradient_examples() {
        let p = poly(3, 3, &[&[0, 1, 2]], &[1]);
        let g = p.gradient_sq_modulus(&ComplexPoint::ones(3)).unwrap();
        assert_eq!(g[0], 2.0);
        assert_eq!(g[3], 0.0);
        let s = skolem_construct(7).unwrap();
        let p = SteinerPolynomial::new(s.clone(), random_signs(&s, 3)).unwrap();
        let g = p.gradient_sq_modulus(&ComplexPoint::zeros(7)).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
        assert!(p.gradient_sq_modulus(&ComplexPoint::zeros(6)).is_err());
    }

    /// Central finite differences of |p|^2 against the analytic gradient.
    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-5;
        for case in 0..100u64 {
            let (n, k) = (6 + (case % 7) as usize, 2 + (case % 3) as usize);
            let system = greedy_construct(n, k, case).unwrap();
            let p = SteinerPolynomial::new(system.clone(), random_signs(&system, case)).unwrap();
            let z = random_point(n, 1000 + case);
            let f = |z: &ComplexPoint| p.evaluate(z).unwrap().norm_sqr();
            let g = p.gradient_sq_modulus(&z).unwrap();
            let scale = g.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-300);
            for i in 0..2 * n {
                let (j, imag) = (i % n, i >= n);
                let mut plus = z.clone();
                let mut minus = z.clone();
                let d = if imag { c(0.0, h) } else { c(h, 0.0) };
                plus.0[j] += d;
                minus.0[j] -= d;
                let fd = (f(&plus) - f(&minus)) / (2.0 * h);
                let err = (fd - g[i]).abs() / scale;
                assert!(err < 1e-6, "case {case} coord {i}: fd {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn random_signs_contract() {
        let s = bose_construct(9).unwrap();
        assert_eq!(random_signs(&s, 11), random_signs(&s, 11));
        assert_ne!(random_signs(&s, 11), random_signs(&s, 12));
        let empty = PartialSteinerSystem::empty(5, 3).unwrap();
        assert!(random_signs(&empty, 0).is_empty());
    }

    #[test]
    fn random_signs_are_balanced() {
        // 10^3 blocks (matching on 2000 points), 10^4 seeded draws
        let blocks: Vec<Block> = (0..1000).map(|i| Block::new(vec![2 * i, 2 * i + 1])).collect();
        let system = PartialSteinerSystem::new(2000, 2, 1, blocks).unwrap();
        let mut sums = vec![0i64; 1000];
        for seed in 0..10_000 {
            for (acc, &s) in sums.iter_mut().zip(random_signs(&system, seed).as_slice()) {
                *acc += i64::from(s);
            }
        }
        for (i, s) in sums.iter().enumerate() {
            let mean = *s as f64 / 10_000.0;
            assert!(mean.abs() <= 0.05, "position {i}: mean {mean}");
        }
    }

    #[test]
    fn text_round_trip() {
        let s = skolem_construct(7).unwrap();
        let p = SteinerPolynomial::new(s.clone(), random_signs(&s, 1)).unwrap();
        assert_eq!(SteinerPolynomial::from_text(&p.to_text()).unwrap(), p);
        let empty = SteinerPolynomial::new(
            PartialSteinerSystem::empty(4, 3).unwrap(),
            SignPattern::all_positive(0),
        )
        .unwrap();
        assert_eq!(SteinerPolynomial::from_text(&empty.to_text()).unwrap(), empty);
        assert!(SteinerPolynomial::from_text("3 3 2\n0 1 2\n+1 -1\n").is_err());
        assert!(SteinerPolynomial::from_text("3 3 2\n0 1 2\n").is_err());
    }

    #[test]
    fn sign_and_alignment_validation() {
        assert!(SignPattern::new(vec![1, 0]).is_err());
        let s = bose_construct(9).unwrap();
        assert!(SteinerPolynomial::new(s, SignPattern::all_positive(3)).is_err());
    }

    #[test]
    fn compensated_agrees_with_plain() {
        let s = greedy_construct(40, 3, 2).unwrap();
        let p = SteinerPolynomial::new(s.clone(), random_signs(&s, 2)).unwrap();
        let z = random_point(40, 5);
        let plain: Complex64 = p.evaluate(&z).unwrap();
        let comp = p.evaluate_compensated(z.coords());
        assert!((plain - comp).norm() <= 1e-10 * (1.0 + comp.norm()));
    }

    #[test]
    fn best_of_signs_single_round_skips_screening() {
        let s = skolem_construct(13).unwrap();
        let full = AscentSettings { starts: 8, max_iters: 500, tol: 1e-10 };
        let (p, est) = best_of_signs(&s, Exponent::INFINITY, &SignSearch::from_full(1, full), 21).unwrap();
        assert_eq!(p.signs(), &random_signs(&s, round_seed(21, 0)));
        let direct = normest::estimate_norm(&p, Exponent::INFINITY, &full, seed::derive_seed(21, &[0xE571, 0])).unwrap();
        assert_eq!(est, direct);
        assert!(best_of_signs(&s, Exponent::TWO, &SignSearch::from_full(0, full), 1).is_err());
    }

    #[test]
    fn best_of_signs_respects_trivial_and_ksz_bounds() {
        let full = AscentSettings { starts: 16, max_iters: 1000, tol: 1e-10 };
        let s7 = skolem_construct(7).unwrap();
        let (p, est) = best_of_signs(&s7, Exponent::INFINITY, &SignSearch::from_full(32, full), 4).unwrap();
        assert!(est.value <= 7.0 + 1e-9);
        assert!(est.recertify(&p));
        let s13 = skolem_construct(13).unwrap();
        let (_, est) = best_of_signs(&s13, Exponent::INFINITY, &SignSearch::from_full(8, full), 4).unwrap();
        assert!(est.value <= 8.0 * (13.0 * 3f64.ln() * 26.0).sqrt());
        let (_, again) = best_of_signs(&s13, Exponent::INFINITY, &SignSearch::from_full(8, full), 4).unwrap();
        assert_eq!(est, again);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn homogeneity(seed in 0u64..10_000, re in -1.4f64..1.4, im in -1.4f64..1.4) {
            let system = greedy_construct(12, 3, seed).unwrap();
            let p = SteinerPolynomial::new(system.clone(), random_signs(&system, seed)).unwrap();
            let z = random_point(12, seed ^ 77);
            let lambda = c(re, im);
            let scaled = ComplexPoint(z.0.iter().map(|&x| x * lambda).collect());
            let lhs = p.evaluate(&scaled).unwrap();
            let rhs = lambda.powu(3) * p.evaluate(&z).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
        }

        #[test]
        fn permutation_equivariance(seed in 0u64..10_000) {
            let n = 10;
            let system = greedy_construct(n, 3, seed).unwrap();
            let p = SteinerPolynomial::new(system.clone(), random_signs(&system, seed)).unwrap();
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(&mut perm[..], &mut seed::rng(seed));
            let relabeled = p.relabeled(&perm).unwrap();
            // integer-valued point keeps every product exact
            let z = ComplexPoint((0..n).map(|j| c(j as f64 - 3.0, (j % 3) as f64)).collect());
            let mut moved = ComplexPoint::zeros(n);
            for j in 0..n {
                moved.0[perm[j]] = z.0[j];
            }
            prop_assert_eq!(p.evaluate(&z).unwrap(), relabeled.evaluate(&moved).unwrap());
        }

        #[test]
        fn triangle_bound(seed in 0u64..10_000) {
            let system = greedy_construct(15, 4, seed).unwrap();
            let p = SteinerPolynomial::new(system.clone(), random_signs(&system, seed)).unwrap();
            let z = random_point(15, seed);
            let bound: f64 = p
                .terms()
                .map(|(b, _)| b.elements().iter().map(|&j| z.0[j].norm()).product::<f64>())
                .sum();
            prop_assert!(p.evaluate(&z).unwrap().norm() <= bound + 1e-12 * (1.0 + bound));
        }
    }
}
