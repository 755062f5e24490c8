//! Von Neumann defect ratios `‖p(T)‖ / ‖p‖_{P(ᵏℓ_qⁿ)}` and their growth in `n`.

mod fit;

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designs::{exact_triple_system, greedy_construct, PartialSteinerSystem};
use crate::dixonop::{self, build_operators, ivp_sup, IvpSettings, Scale};
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::normest::{ksz_polydisk_bound, AscentSettings, NormEstimate, NormMethod};
use crate::seed;
use crate::steinerpoly::{best_of_signs, SignSearch, SteinerPolynomial};

pub use fit::{fit_exponent, fit_points, median, FitField, FitResult};

pub const CSV_HEADER: [&str; 15] = [
    "k",
    "q",
    "r",
    "n",
    "seed",
    "num_blocks",
    "norm_est",
    "norm_method",
    "op_norm",
    "ratio",
    "floor_ratio",
    "ksz_ref",
    "analytic_lower_ref",
    "normalized_flag",
    "elapsed_ms",
];

const DESIGN_STREAM: u64 = 1;
const SIGN_STREAM: u64 = 2;
const IVP_STREAM: u64 = 3;

/// Work limits for one ratio computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Budgets {
    pub sign_rounds: usize,
    pub ascent: AscentSettings,
    pub power_tol: f64,
    pub ivp: IvpSettings,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            sign_rounds: 32,
            ascent: AscentSettings::default(),
            power_tol: dixonop::DEFAULT_TOL,
            ivp: IvpSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRecord {
    pub k: usize,
    pub q: Exponent,
    pub r: Exponent,
    pub n: usize,
    pub seed: u64,
    pub num_blocks: usize,
    /// Lower estimate of `‖p‖_{P(ᵏℓ_qⁿ)}`.
    pub norm_est: f64,
    pub norm_method: String,
    /// `‖p(S_1, …, S_n)‖` for the scaled tuple `S_j`.
    pub op_norm: f64,
    pub ratio: f64,
    /// `|S| · scaleᵏ / norm_est`.
    pub floor_ratio: f64,
    /// `|S| · scaleᵏ` over the KSZ polydisk bound.
    pub ksz_ref: f64,
    pub analytic_lower_ref: f64,
    /// The tuple was divided by `max_l ‖T_l‖ > 1`.
    pub normalized_flag: bool,
    pub elapsed_ms: u64,
}

/// `|S| / ksz_polydisk_bound(n, k, |S|)`.
pub fn ksz_floor_ratio(n: usize, k: usize, blocks: usize) -> f64 {
    let b = ksz_polydisk_bound(n, k, blocks);
    if b == 0.0 {
        0.0
    } else {
        blocks as f64 / b
    }
}

/// Reference lower-bound curve for the ratio at `(k, q, r)`:
/// `ln^{−3/q} n · n^{k(1/2 + 1/q − 1/r) − 1}` for `q ≥ 2` and
/// `ln^{−3/q'} n · n^{k/r' − 1}` for `q ≤ 2`.
pub fn analytic_lower_ref(k: usize, q: Exponent, r: Exponent, n: usize) -> f64 {
    let (kf, nf) = (k as f64, n as f64);
    let ln = nf.ln();
    let (iq, ir) = (q.reciprocal(), r.reciprocal());
    if q.value() >= 2.0 {
        ln.powf(-3.0 * iq) * nf.powf(kf * (0.5 + iq - ir) - 1.0)
    } else {
        ln.powf(-3.0 * (1.0 - iq)) * nf.powf(kf * (1.0 - ir) - 1.0)
    }
}

/// Exact Steiner triple system when one exists, greedy packing otherwise.
pub fn best_design(n: usize, k: usize, seed: u64) -> Result<PartialSteinerSystem> {
    if k == 3 {
        if let Some(s) = exact_triple_system(n) {
            return Ok(s);
        }
    }
    greedy_construct(n, k, seed)
}

/// Ratio record for a fixed polynomial and its norm estimate. The tuple is
/// normalized to contractions when some `‖T_l‖ > 1`, then scaled by
/// `n^{−1/r}`. `elapsed_ms` is left at zero.
pub fn ratio_record(p: &SteinerPolynomial, est: &NormEstimate, r: Exponent, seed: u64, power_tol: f64) -> Result<RatioRecord> {
    let (n, k) = (p.n(), p.degree());
    let mut tuple = build_operators(p)?;
    tuple.normalize_to_contractions()?;
    let scale = Scale::new(tuple.scale().factor, r)?;
    let tuple = tuple.with_scale(scale);
    let op_norm = dixonop::polynomial_operator_norm(&tuple, p, power_tol)?;
    let numerator = p.num_terms() as f64 * tuple.scale_value().powi(k as i32);
    let quotient = |x: f64| if est.value > 0.0 { x / est.value } else { f64::INFINITY };
    let ksz = ksz_polydisk_bound(n, k, p.num_terms());
    Ok(RatioRecord {
        k,
        q: est.q,
        r,
        n,
        seed,
        num_blocks: p.num_terms(),
        norm_est: est.value,
        norm_method: est.method.as_str().to_string(),
        op_norm,
        ratio: quotient(op_norm),
        floor_ratio: quotient(numerator),
        ksz_ref: if ksz > 0.0 { numerator / ksz } else { 0.0 },
        analytic_lower_ref: analytic_lower_ref(k, est.q, r, n),
        normalized_flag: tuple.is_normalized(),
        elapsed_ms: 0,
    })
}

/// Full pipeline for one `(k, n, q, r, seed)` cell: design, best-of-signs
/// polynomial at `q`, operator tuple, ratio.
pub fn ratio_point(k: usize, n: usize, q: Exponent, r: Exponent, seed: u64, budgets: &Budgets) -> Result<RatioRecord> {
    if k < 3 || n < k {
        return Err(Error::domain(format!("ratio_point needs 3 <= k <= n, got k = {k}, n = {n}")));
    }
    let start = Instant::now();
    let system = best_design(n, k, seed::derive_seed(seed, &[DESIGN_STREAM]))?;
    let search = SignSearch::from_full(budgets.sign_rounds, budgets.ascent);
    let (p, est) = best_of_signs(&system, q, &search, seed::derive_seed(seed, &[SIGN_STREAM]))?;
    let mut rec = ratio_record(&p, &est, r, seed, budgets.power_tol)?;
    rec.elapsed_ms = start.elapsed().as_millis() as u64;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub k: usize,
    pub q: Exponent,
    pub r: Exponent,
    pub ns: Vec<usize>,
    pub seeds_per_n: usize,
    pub master_seed: u64,
    pub budgets: Budgets,
    pub out: Option<PathBuf>,
}

impl SweepConfig {
    /// Seed of cell `(n, s)`.
    pub fn cell_seed(&self, n: usize, s: usize) -> u64 {
        seed::derive_seed(self.master_seed, &[n as u64, s as u64])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub n: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub records: Vec<RatioRecord>,
    pub failures: Vec<CellFailure>,
}

fn open_writer(path: &Path) -> Result<csv::Writer<File>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(CSV_HEADER)?;
    w.flush()?;
    Ok(w)
}

/// Runs every `(n, seed)` cell. Cells of one `n` run in parallel; rows are
/// appended to the CSV (when configured) after each `n`, sorted by seed
/// index. A failing cell becomes an error row and the sweep continues.
pub fn sweep(config: &SweepConfig) -> Result<SweepResult> {
    if config.ns.is_empty() {
        return Err(Error::validation("sweep needs at least one n"));
    }
    if config.ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation("sweep n list must be strictly ascending"));
    }
    if config.seeds_per_n == 0 {
        return Err(Error::validation("sweep needs at least one seed per n"));
    }
    let mut writer = config.out.as_deref().map(open_writer).transpose()?;
    let mut result = SweepResult {
        records: Vec::new(),
        failures: Vec::new(),
    };
    for &n in &config.ns {
        let cells: Vec<(u64, Result<RatioRecord>)> = (0..config.seeds_per_n)
            .into_par_iter()
            .map(|s| {
                let seed = config.cell_seed(n, s);
                (seed, ratio_point(config.k, n, config.q, config.r, seed, &config.budgets))
            })
            .collect();
        for (seed, cell) in cells {
            match cell {
                Ok(rec) => {
                    if let Some(w) = writer.as_mut() {
                        w.serialize(&rec)?;
                    }
                    result.records.push(rec);
                }
                Err(e) => {
                    log::warn!("sweep cell n = {n}, seed = {seed} failed: {e}");
                    if let Some(w) = writer.as_mut() {
                        let (k, q, r) = (config.k.to_string(), config.q.to_string(), config.r.to_string());
                        let (ns, ss) = (n.to_string(), seed.to_string());
                        let mut row = vec![k.as_str(), q.as_str(), r.as_str(), ns.as_str(), ss.as_str()];
                        row.extend(["", "", "error", "", "", "", "", "", "", ""]);
                        w.write_record(&row)?;
                    }
                    result.failures.push(CellFailure {
                        n,
                        seed,
                        message: e.to_string(),
                    });
                }
            }
        }
        if let Some(w) = writer.as_mut() {
            w.flush()?;
        }
    }
    Ok(result)
}

/// Reads the successful rows of a sweep CSV; error rows are skipped.
pub fn read_records(path: &Path) -> Result<Vec<RatioRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let method_col = headers
        .iter()
        .position(|h| h == "norm_method")
        .ok_or_else(|| Error::validation("CSV has no norm_method column"))?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        if row.get(method_col) == Some("error") {
            continue;
        }
        out.push(row.deserialize(Some(&headers))?);
    }
    Ok(out)
}

/// Writes records with the sweep header.
pub fn write_records(path: &Path, records: &[RatioRecord]) -> Result<()> {
    let mut w = open_writer(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of the ℓ₂ / (IVp) experiment at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct D32Record {
    pub n: usize,
    pub seed: u64,
    pub num_blocks: usize,
    /// Lower estimate of `‖p‖_{P(³ℓ₂ⁿ)}`, used in place of the true norm.
    pub norm_est: f64,
    /// `sup_{‖α‖₂ = 1} ‖Σ α_j S_j‖` for `S_j = T_j / norm_est^{1/2}`.
    pub ivp_value: f64,
    /// `ivp_value ≤ 1 + 1e-6`.
    pub bound_check: bool,
    /// `|S| / norm_est^{5/2}`.
    pub ratio: f64,
    /// `n² / ln^{15/4} n`.
    pub reference: f64,
    pub normalized_ratio: f64,
    /// `‖p(S)‖`, which equals `|S| / norm_est^{3/2}` at `k = 3`.
    pub op_norm: f64,
}

pub const IVP_TOLERANCE: f64 = 1e-6;

pub fn d32_reference(n: usize) -> f64 {
    let nf = n as f64;
    nf * nf / nf.ln().powf(15.0 / 4.0)
}

/// Builds the best-of-signs cubic polynomial at `q = 2`, scales its tuple by
/// `norm_est^{−1/2}` and measures how far it is from the (IVp) condition.
/// A violated check is reported, not raised.
pub fn d32_experiment(n: usize, seed: u64, budgets: &Budgets) -> Result<D32Record> {
    if n < 7 {
        return Err(Error::domain(format!("d32_experiment needs n >= 7, got {n}")));
    }
    let system = best_design(n, 3, seed::derive_seed(seed, &[DESIGN_STREAM]))?;
    let search = SignSearch::from_full(budgets.sign_rounds, budgets.ascent);
    let (p, est) = best_of_signs(&system, Exponent::TWO, &search, seed::derive_seed(seed, &[SIGN_STREAM]))?;
    d32_for_polynomial(&p, &est, seed, budgets)
}

/// [`d32_experiment`] for a given polynomial and `ℓ₂` estimate.
pub fn d32_for_polynomial(p: &SteinerPolynomial, est: &NormEstimate, seed: u64, budgets: &Budgets) -> Result<D32Record> {
    if p.degree() != 3 || est.q != Exponent::TWO || !(est.value > 0.0) {
        return Err(Error::domain("d32 needs a nonzero cubic polynomial and an l2 estimate"));
    }
    let tuple = build_operators(p)?.with_scale(Scale::new(est.value.powf(-0.5), Exponent::INFINITY)?);
    let ivp_value = ivp_sup(&tuple, Exponent::TWO, &budgets.ivp, seed::derive_seed(seed, &[IVP_STREAM]))?;
    if ivp_value > 1.0 + IVP_TOLERANCE {
        log::warn!("n = {}: scaled tuple has ivp_sup = {ivp_value} > 1", p.n());
    }
    let op_norm = dixonop::polynomial_operator_norm(&tuple, p, budgets.power_tol)?;
    let ratio = p.num_terms() as f64 / est.value.powf(2.5);
    let reference = d32_reference(p.n());
    Ok(D32Record {
        n: p.n(),
        seed,
        num_blocks: p.num_terms(),
        norm_est: est.value,
        ivp_value,
        bound_check: ivp_value <= 1.0 + IVP_TOLERANCE,
        ratio,
        reference,
        normalized_ratio: ratio / reference,
        op_norm,
    })
}

/// Estimates whose method is not an optimizer run (e.g. oracle values)
/// are still valid denominators.
pub fn is_oracle(method: NormMethod) -> bool {
    matches!(method, NormMethod::GridOracle | NormMethod::SamplingOracle)
}
