use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::OperatorTuple;
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::seed;

const INNER_ITERS: usize = 2000;
const INNER_TOL: f64 = 1e-13;
const OUTER_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IvpSettings {
    pub starts: usize,
    /// Alternation rounds per start.
    pub iters: usize,
}

impl Default for IvpSettings {
    fn default() -> Self {
        IvpSettings { starts: 8, iters: 200 }
    }
}

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn random_vector(len: usize, rng: &mut impl rand::Rng) -> Vec<Complex64> {
    (0..len)
        .map(|_| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect()
}

fn l2_normalize(x: &mut [Complex64]) -> f64 {
    let norm = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|c| *c /= norm);
    }
    norm
}

/// `y = Σ_j α_j T_j x`.
fn combo(t: &OperatorTuple, alpha: &[Complex64], x: &[Complex64], y: &mut [Complex64]) {
    y.iter_mut().for_each(|v| *v = zero());
    for (op, &a) in t.ops().iter().zip(alpha) {
        if a == zero() {
            continue;
        }
        for (r, c, v) in op.entries() {
            y[r] += a * x[c] * v as f64;
        }
    }
}

/// `x = (Σ_j α_j T_j)* y`.
fn combo_adjoint(t: &OperatorTuple, alpha: &[Complex64], y: &[Complex64], x: &mut [Complex64]) {
    x.iter_mut().for_each(|v| *v = zero());
    for (op, &a) in t.ops().iter().zip(alpha) {
        if a == zero() {
            continue;
        }
        let ac = a.conj();
        for (r, c, v) in op.entries() {
            x[c] += ac * y[r] * v as f64;
        }
    }
}

/// Improves the right singular vector `h` of `A(α)` in place by power
/// iteration and returns `‖A(α) h‖` with the matching left vector.
fn top_singular(t: &OperatorTuple, alpha: &[Complex64], h: &mut [Complex64]) -> (f64, Vec<Complex64>) {
    let mut g = vec![zero(); t.dim()];
    let mut sigma = 0.0_f64;
    for _ in 0..INNER_ITERS {
        combo(t, alpha, h, &mut g);
        let s = g.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        combo_adjoint(t, alpha, &g, h);
        let done = l2_normalize(h) == 0.0 || s - sigma <= INNER_TOL * s;
        sigma = s;
        if done {
            break;
        }
    }
    combo(t, alpha, h, &mut g);
    let s = l2_normalize(&mut g);
    (s, g)
}

/// The maximiser of `|Σ α_j w_j|` over `‖α‖_{q'} = 1`, which attains `‖w‖_q`.
fn dual_alpha(w: &[Complex64], q: f64) -> Vec<Complex64> {
    let moduli: Vec<f64> = w.iter().map(|c| c.norm()).collect();
    let norm = Exponent::new(q).map(|e| e.norm_of(&moduli)).unwrap_or(0.0);
    if norm == 0.0 {
        return w.to_vec();
    }
    w.iter()
        .zip(&moduli)
        .map(|(c, &m)| {
            if m == 0.0 {
                zero()
            } else {
                c.conj() / m * (m / norm).powf(q - 1.0)
            }
        })
        .collect()
}

fn one_start(t: &OperatorTuple, q: f64, iters: usize, seed: u64) -> f64 {
    let mut rng = seed::rng(seed);
    let n = t.n();
    let qc = Exponent::new(q).map(Exponent::conjugate).unwrap_or(Exponent::TWO);
    let mut alpha = random_vector(n, &mut rng);
    let moduli: Vec<f64> = alpha.iter().map(|c| c.norm()).collect();
    let norm = qc.norm_of(&moduli);
    alpha.iter_mut().for_each(|c| *c /= norm);
    let mut h = random_vector(t.dim(), &mut rng);
    l2_normalize(&mut h);
    let mut best = 0.0_f64;
    for _ in 0..iters {
        let (sigma, g) = top_singular(t, &alpha, &mut h);
        let gain = sigma - best;
        best = best.max(sigma);
        if sigma == 0.0 || gain <= OUTER_TOL * sigma {
            break;
        }
        // w_j = ⟨T_j h, g⟩
        let w: Vec<Complex64> = t
            .ops()
            .iter()
            .map(|op| op.entries().map(|(r, c, v)| g[r].conj() * h[c] * v as f64).sum())
            .collect();
        alpha = dual_alpha(&w, q);
    }
    best
}

/// Lower estimate of `sup { ‖Σ_j α_j S_j‖ : ‖α‖_{q'} = 1 }` for the scaled
/// operators `S_j = scale · T_j`, by alternating between the top singular
/// pair `(h, g)` of `Σ α_j T_j` and the dual maximiser `α` of
/// `|Σ α_j ⟨T_j h, g⟩|`. Each alternation cannot decrease the value.
///
/// Start `i` uses `derive_seed(seed, [i])`; the best start is returned.
pub fn ivp_sup(t: &OperatorTuple, q: Exponent, settings: &IvpSettings, seed: u64) -> Result<f64> {
    let qv = q.value();
    if !(qv > 1.0 && qv.is_finite()) {
        return Err(Error::domain(format!("ivp_sup needs 1 < q < inf, got q = {q}")));
    }
    if settings.starts == 0 || settings.iters == 0 {
        return Err(Error::domain("ivp_sup needs at least one start and one iteration"));
    }
    let best = (0..settings.starts)
        .into_par_iter()
        .map(|i| one_start(t, qv, settings.iters, seed::derive_seed(seed, &[i as u64])))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max);
    Ok(best * t.scale_value())
}
