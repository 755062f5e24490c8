use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::AscentSettings;
use crate::exponent::Exponent;
use crate::seed;
use crate::steinerpoly::SteinerPolynomial;

const INITIAL_STEP: f64 = 0.5;
const SHRINK: f64 = 0.5;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;
const MAX_POLISH_SWEEPS: usize = 200;

/// Result of one ascent start.
#[derive(Debug, Clone)]
pub struct StartOutcome {
    /// Final point, inside the closed unit `q`-ball up to rounding.
    pub point: Vec<Complex64>,
    /// `|p(point)|`.
    pub value: f64,
    pub iterations: usize,
    /// Objective `|p|²` after every accepted step, when requested.
    pub trace: Option<Vec<f64>>,
}

/// Runs one ascent start seeded by `seed`.
pub fn ascend(
    p: &SteinerPolynomial,
    q: Exponent,
    settings: &AscentSettings,
    seed: u64,
    record_trace: bool,
) -> StartOutcome {
    let mut trace = record_trace.then(Vec::new);
    let (point, iterations) = if q.is_infinite() {
        torus_ascent(p, settings, seed, &mut trace)
    } else {
        sphere_ascent(p, q, settings, seed, &mut trace)
    };
    let value = p.evaluate_unchecked(&point).norm();
    StartOutcome {
        point,
        value,
        iterations,
        trace,
    }
}

fn push(trace: &mut Option<Vec<f64>>, f: f64) {
    if let Some(t) = trace {
        t.push(f);
    }
}

fn phases(theta: &[f64]) -> Vec<Complex64> {
    theta.iter().map(|&t| Complex64::cis(t)).collect()
}

/// Gradient ascent over the phases `z_j = e^{iθ_j}`, then exact cyclic
/// coordinate maximisation.
fn torus_ascent(
    p: &SteinerPolynomial,
    settings: &AscentSettings,
    seed: u64,
    trace: &mut Option<Vec<f64>>,
) -> (Vec<Complex64>, usize) {
    let n = p.n();
    let mut rng = seed::rng(seed);
    let mut theta: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * TAU).collect();
    let mut partials = vec![Complex64::new(0.0, 0.0); n];
    let mut grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut iterations = 0;

    let mut z = phases(&theta);
    let mut value = p.value_and_partials(&z, &mut partials);
    let mut f = value.norm_sqr();
    push(trace, f);
    while iterations < settings.max_iters {
        iterations += 1;
        for j in 0..n {
            grad[j] = -2.0 * (value.conj() * partials[j] * z[j]).im;
        }
        let gmax = grad.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        if gmax == 0.0 {
            break;
        }
        // direction normalised so the largest phase moves by the step size
        let slope: f64 = grad.iter().map(|g| g * g / gmax).sum();
        let mut step = INITIAL_STEP;
        let accepted = loop {
            for j in 0..n {
                trial[j] = theta[j] + step * grad[j] / gmax;
            }
            let fz = p.evaluate_unchecked(&phases(&trial)).norm_sqr();
            if fz >= f + ARMIJO * step * slope {
                break Some(fz);
            }
            step *= SHRINK;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some(f_new) = accepted else { break };
        let gain = (f_new - f) / f.max(f64::MIN_POSITIVE);
        std::mem::swap(&mut theta, &mut trial);
        z = phases(&theta);
        value = p.value_and_partials(&z, &mut partials);
        f = value.norm_sqr();
        push(trace, f);
        if gain < settings.tol {
            break;
        }
    }
    iterations += coordinate_polish(p, &mut z, settings.tol, trace);
    (z, iterations)
}

/// Cyclic exact maximisation over one coordinate at a time on the torus.
///
/// Writing `p = a_j z_j + b_j` with `a_j, b_j` independent of `z_j`, the
/// best unimodular `z_j` aligns the phases of `a_j z_j` and `b_j`, giving
/// `|a_j| + |b_j| ≥ |p|`.
fn coordinate_polish(
    p: &SteinerPolynomial,
    z: &mut [Complex64],
    tol: f64,
    trace: &mut Option<Vec<f64>>,
) -> usize {
    let mut f = p.evaluate_unchecked(z).norm_sqr();
    let mut sweeps = 0;
    while sweeps < MAX_POLISH_SWEEPS {
        sweeps += 1;
        let mut value = p.evaluate_unchecked(z);
        for j in 0..z.len() {
            let a = partial(p, z, j);
            let b = value - a * z[j];
            if a.norm() == 0.0 || b.norm() == 0.0 {
                continue;
            }
            let candidate = (b / b.norm()) * (a.conj() / a.norm());
            let improved = a * candidate + b;
            if improved.norm() > (a * z[j] + b).norm() {
                z[j] = candidate;
                value = improved;
            }
        }
        let f_new = p.evaluate_unchecked(z).norm_sqr();
        push(trace, f_new.max(f));
        let gain = (f_new - f) / f.max(f64::MIN_POSITIVE);
        f = f.max(f_new);
        if gain < tol {
            break;
        }
    }
    sweeps
}

fn partial(p: &SteinerPolynomial, z: &[Complex64], j: usize) -> Complex64 {
    let blocks = p.system().blocks();
    let signs = p.signs().as_slice();
    p.blocks_containing(j)
        .iter()
        .map(|&bi| {
            let prod = blocks[bi]
                .elements()
                .iter()
                .filter(|&&i| i != j)
                .fold(Complex64::new(1.0, 0.0), |acc, &i| acc * z[i]);
            prod * f64::from(signs[bi])
        })
        .sum()
}

fn q_norm(z: &[Complex64], q: Exponent) -> f64 {
    let moduli: Vec<f64> = z.iter().map(|c| c.norm()).collect();
    q.norm_of(&moduli)
}

/// Gradient ascent of the scale-invariant ratio `|p(z)|²/‖z‖_q^{2k}`,
/// retracting to the unit `q`-sphere after every accepted step.
fn sphere_ascent(
    p: &SteinerPolynomial,
    q: Exponent,
    settings: &AscentSettings,
    seed: u64,
    trace: &mut Option<Vec<f64>>,
) -> (Vec<Complex64>, usize) {
    let n = p.n();
    let k = p.degree() as i32;
    let qv = q.value();
    let mut rng = seed::rng(seed);
    let mut z: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = q_norm(&z, q);
    z.iter_mut().for_each(|c| *c /= norm);

    let mut partials = vec![Complex64::new(0.0, 0.0); n];
    let mut grad = vec![Complex64::new(0.0, 0.0); n];
    let mut trial = vec![Complex64::new(0.0, 0.0); n];
    let mut iterations = 0;
    let mut value = p.value_and_partials(&z, &mut partials);
    let mut f = value.norm_sqr();
    push(trace, f);
    while iterations < settings.max_iters {
        iterations += 1;
        // gradient of |p|^2 / ‖z‖_q^{2k} at a point with ‖z‖_q = 1
        for j in 0..n {
            let m = z[j].norm();
            let norm_grad = if m > 0.0 {
                z[j] * m.powf(qv - 2.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            grad[j] = 2.0 * value * partials[j].conj() - norm_grad * (2.0 * f64::from(k) * f);
        }
        let gnorm = grad.iter().map(|g| g.norm_sqr()).sum::<f64>().sqrt();
        if gnorm == 0.0 || !gnorm.is_finite() {
            break;
        }
        let znorm = z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let scale = znorm / gnorm;
        let slope = gnorm * znorm;
        let mut step = INITIAL_STEP;
        let accepted = loop {
            for j in 0..n {
                trial[j] = z[j] + grad[j] * (step * scale);
            }
            let tn = q_norm(&trial, q);
            if tn > 0.0 {
                let ratio = p.evaluate_unchecked(&trial).norm_sqr() / tn.powi(2 * k);
                if ratio >= f + ARMIJO * step * slope {
                    trial.iter_mut().for_each(|c| *c /= tn);
                    break true;
                }
            }
            step *= SHRINK;
            if step < MIN_STEP {
                break false;
            }
        };
        if !accepted {
            break;
        }
        std::mem::swap(&mut z, &mut trial);
        let new_value = p.value_and_partials(&z, &mut partials);
        let f_new = new_value.norm_sqr();
        let gain = (f_new - f) / f.max(f64::MIN_POSITIVE);
        value = new_value;
        f = f_new;
        push(trace, f);
        if gain < settings.tol {
            break;
        }
    }
    (z, iterations)
}
