//! Brute-force sup-norm oracle for tiny `n`, used only to check the ascent.
//!
//! Deliberately shares nothing with the optimizer: it evaluates monomials
//! directly, searches a phase grid (or random sphere samples) and refines the
//! best candidate with a derivative-free compass search.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{clamp_to_ball, NormEstimate, NormMethod};
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::seed;
use crate::steinerpoly::{ComplexPoint, SteinerPolynomial};

pub const MAX_ORACLE_N: usize = 7;
const MAX_GRID_POINTS: u64 = 1 << 28;
const SPHERE_SAMPLES: usize = 1_000_000;
const ORACLE_SEED: u64 = 0x0_4AC1E;

struct Terms {
    terms: Vec<(Vec<usize>, f64)>,
}

impl Terms {
    fn new(p: &SteinerPolynomial) -> Self {
        Terms {
            terms: p
                .terms()
                .map(|(b, s)| (b.elements().to_vec(), f64::from(s)))
                .collect(),
        }
    }

    fn modulus(&self, z: &[Complex64]) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (b, s) in &self.terms {
            let mut m = Complex64::new(*s, 0.0);
            for &j in b {
                m *= z[j];
            }
            acc += m;
        }
        acc.norm()
    }
}

/// Exhaustive / sampling lower bound of the sup-norm for `n ≤ 7`.
///
/// For `q = ∞` every phase vector on the grid `2πm/resolution` is tried
/// (with `θ_0 = 0`, which loses nothing because `|p|` is invariant under a
/// common phase rotation), then the best is refined. For `q < ∞` at least
/// 10⁶ random points of the unit `q`-sphere are sampled and the best refined.
pub fn brute_force_norm(p: &SteinerPolynomial, q: Exponent, resolution: usize) -> Result<NormEstimate> {
    let n = p.n();
    if n > MAX_ORACLE_N {
        return Err(Error::domain(format!(
            "brute-force oracle supports n <= {MAX_ORACLE_N}, got n = {n}"
        )));
    }
    if resolution < 16 {
        return Err(Error::domain(format!("oracle resolution {resolution} < 16")));
    }
    let terms = Terms::new(p);
    let (z, method) = if q.is_infinite() {
        (grid_search(&terms, n, resolution)?, NormMethod::GridOracle)
    } else {
        (sphere_search(&terms, n, q), NormMethod::SamplingOracle)
    };
    let value = terms.modulus(&z);
    Ok(NormEstimate {
        value,
        q,
        witness: ComplexPoint::new(z),
        method,
        starts: 1,
        iterations: 0,
        seed: ORACLE_SEED,
    })
}

fn grid_search(terms: &Terms, n: usize, resolution: usize) -> Result<Vec<Complex64>> {
    let free = n.saturating_sub(1) as u32;
    let points = (resolution as u64)
        .checked_pow(free)
        .filter(|&c| c <= MAX_GRID_POINTS)
        .ok_or_else(|| {
            Error::domain(format!(
                "grid of {resolution}^{free} points is too large for the oracle"
            ))
        })?;
    let roots: Vec<Complex64> = (0..resolution)
        .map(|m| Complex64::cis(TAU * m as f64 / resolution as f64))
        .collect();
    let mut digits = vec![0usize; n];
    let mut z = vec![Complex64::new(1.0, 0.0); n];
    let mut best = (f64::NEG_INFINITY, digits.clone());
    for _ in 0..points {
        for j in 1..n {
            z[j] = roots[digits[j]];
        }
        let v = terms.modulus(&z);
        if v > best.0 {
            best = (v, digits.clone());
        }
        for d in digits.iter_mut().skip(1) {
            *d += 1;
            if *d < resolution {
                break;
            }
            *d = 0;
        }
    }
    let mut theta: Vec<f64> = best
        .1
        .iter()
        .map(|&d| TAU * d as f64 / resolution as f64)
        .collect();
    let f = |theta: &[f64]| {
        let z: Vec<Complex64> = theta.iter().map(|&t| Complex64::cis(t)).collect();
        terms.modulus(&z)
    };
    compass_refine(&mut theta, TAU / resolution as f64, f);
    Ok(theta.iter().map(|&t| Complex64::cis(t)).collect())
}

fn sphere_search(terms: &Terms, n: usize, q: Exponent) -> Vec<Complex64> {
    let mut rng = seed::rng(ORACLE_SEED);
    let project = |z: &mut [Complex64]| {
        let moduli: Vec<f64> = z.iter().map(|c| c.norm()).collect();
        let norm = q.norm_of(&moduli);
        if norm > 0.0 {
            z.iter_mut().for_each(|c| *c /= norm);
        }
    };
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    let mut best = (f64::NEG_INFINITY, z.clone());
    for _ in 0..SPHERE_SAMPLES {
        for c in z.iter_mut() {
            *c = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        project(&mut z);
        let v = terms.modulus(&z);
        if v > best.0 {
            best = (v, z.clone());
        }
    }
    // refine in 2n real coordinates, re-projecting every trial point
    let mut x: Vec<f64> = best.1.iter().flat_map(|c| [c.re, c.im]).collect();
    let to_point = |x: &[f64]| -> Vec<Complex64> {
        let mut z: Vec<Complex64> = x.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
        project(&mut z);
        z
    };
    compass_refine(&mut x, 0.1, |x| terms.modulus(&to_point(x)));
    let mut z = to_point(&x);
    clamp_to_ball(&mut z, q);
    z
}

/// Compass search: try ±step along every coordinate, halve the step when no
/// move improves, stop at a step of 1e-12.
fn compass_refine(x: &mut [f64], mut step: f64, f: impl Fn(&[f64]) -> f64) {
    let mut best = f(x);
    while step > 1e-12 {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let old = x[i];
                x[i] = old + dir * step;
                let v = f(x);
                if v > best {
                    best = v;
                    improved = true;
                } else {
                    x[i] = old;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
}
