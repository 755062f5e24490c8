//! The `vn` command line.
//!
//! Every subcommand prints a short text summary, or a JSON document with
//! `--json`. Commands that write a file also write `<file>.manifest.json`.
//! Exit codes: 0 on success, 1 on invalid input or a failed check, 2 when a
//! numerical method does not converge. `VN_THREADS` caps the worker pool
//! (0 or unset means one thread per core).

mod manifest;
pub mod plot;

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::designs::{
    bose_construct, density_report, greedy_construct, skolem_construct, PartialSteinerSystem,
    DEFAULT_DENSITY_CONSTANT,
};
use crate::dixonop::{
    apply_polynomial, build_operators, check_commuting, gram_diagonal_check, operator_norm,
    polynomial_operator_norm, IvpSettings, OperatorTuple, DEFAULT_MAX_ITERS,
};
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::normest::{brute_force_norm, estimate_norm, AscentSettings};
use crate::steinerpoly::{best_of_signs, random_signs, round_seed, SignSearch, SteinerPolynomial};
use crate::vnratio::{self, fit_exponent, read_records, Budgets, FitField, SweepConfig};

pub use manifest::{manifest_path, RunManifest};

#[derive(Parser, Debug, Serialize)]
#[command(name = "vn", version, about = "Steiner polynomials and von Neumann defect experiments")]
pub struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
pub enum Command {
    /// Build and verify partial Steiner systems.
    #[command(subcommand)]
    Design(DesignCmd),
    /// Sample Steiner unimodular polynomials and estimate their norms.
    #[command(subcommand)]
    Poly(PolyCmd),
    /// Materialize and check the operator tuple of a polynomial.
    #[command(subcommand)]
    Op(OpCmd),
    /// Defect-ratio sweeps, exponent fits and the l2 experiment.
    #[command(subcommand)]
    Ratio(RatioCmd),
    /// Scatter plot of two CSV columns as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Greedy,
    Bose,
    Skolem,
}

#[derive(Subcommand, Debug, Serialize)]
pub enum DesignCmd {
    /// Construct a system and write it to a file.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, value_enum, default_value_t = MethodArg::Greedy)]
        method: MethodArg,
        /// Required for the greedy method.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a system file and report its fill.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AscentArgs {
    /// Multistart count of the norm estimate.
    #[arg(long, default_value_t = 64)]
    pub starts: usize,
    /// Iteration cap per start.
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    /// Relative gain below which a start stops.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

impl AscentArgs {
    fn settings(&self) -> AscentSettings {
        AscentSettings {
            starts: self.starts,
            max_iters: self.iters,
            tol: self.tol,
        }
    }
}

#[derive(Subcommand, Debug, Serialize)]
pub enum PolyCmd {
    /// Attach signs to a design. With --rounds > 1 the signs with the smallest
    /// estimated q-norm among that many draws are kept.
    Sample {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        rounds: usize,
        #[arg(long, default_value = "inf")]
        q: Exponent,
        #[command(flatten)]
        ascent: AscentArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the sup-norm on the unit q-ball (a certified lower bound).
    Norm {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "inf")]
        q: Exponent,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        ascent: AscentArgs,
        /// Use the brute-force oracle with this grid resolution (n <= 7 only).
        #[arg(long)]
        oracle: Option<usize>,
    },
}

#[derive(Subcommand, Debug, Serialize)]
pub enum OpCmd {
    /// Write the operator tuple of a polynomial into a directory.
    Build {
        #[arg(long)]
        poly: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Commutation, Gram and norm report of a stored tuple (always JSON).
    Check {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BudgetArgs {
    /// Sign patterns tried per polynomial.
    #[arg(long, default_value_t = 32)]
    pub rounds: usize,
    #[command(flatten)]
    pub ascent: AscentArgs,
    #[arg(long, default_value_t = 8)]
    pub ivp_starts: usize,
    #[arg(long, default_value_t = 200)]
    pub ivp_iters: usize,
}

impl BudgetArgs {
    fn budgets(&self) -> Budgets {
        Budgets {
            sign_rounds: self.rounds,
            ascent: self.ascent.settings(),
            power_tol: crate::dixonop::DEFAULT_TOL,
            ivp: IvpSettings {
                starts: self.ivp_starts,
                iters: self.ivp_iters,
            },
        }
    }
}

#[derive(Subcommand, Debug, Serialize)]
pub enum RatioCmd {
    /// One record per (n, seed), streamed to a CSV.
    Sweep {
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value = "inf")]
        q: Exponent,
        #[arg(long, default_value = "inf")]
        r: Exponent,
        /// Ascending list, e.g. `--n 7,13,19`.
        #[arg(long = "n", value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        seeds_per_n: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        budgets: BudgetArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Log-log fit of per-n medians.
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        /// `ratio` or `floor_ratio`.
        #[arg(long, default_value = "ratio")]
        field: String,
        /// Divide values by ln^C(n) before fitting.
        #[arg(long = "logcorr", default_value_t = 0.0, allow_hyphen_values = true)]
        log_correction: f64,
    },
    /// The l2 experiment: ivp value of the normalized tuple and |S|/norm^{5/2}.
    D32 {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        budgets: BudgetArgs,
    },
}

#[derive(Args, Debug, Serialize)]
pub struct PlotArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    #[arg(long)]
    pub loglog: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Text and JSON forms of a command's result, plus its exit code.
struct Outcome {
    text: String,
    json: serde_json::Value,
    code: i32,
}

impl Outcome {
    fn ok(text: String, json: serde_json::Value) -> Self {
        Outcome { text, json, code: 0 }
    }
}

/// Writes a line to stdout, ignoring a closed pipe.
fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

fn configure_threads() {
    let threads = std::env::var("VN_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(0);
    if threads > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    configure_threads();
    match dispatch(&cli, &argv) {
        Ok(out) => {
            if cli.json {
                emit(&serde_json::to_string_pretty(&out.json).unwrap_or_default());
            } else if !out.text.is_empty() {
                emit(&out.text);
            }
            out.code
        }
        Err(e) => {
            if cli.json {
                emit(&json!({ "error": e.to_string(), "exit_code": e.exit_code() }).to_string());
            }
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, argv: &[OsString]) -> Result<Outcome> {
    let started = manifest::now();
    let params = serde_json::to_value(&cli.command)?;
    let manifest = |seed: Option<u64>| RunManifest::new(argv, params.clone(), seed, started);
    match &cli.command {
        Command::Design(DesignCmd::Gen {
            n,
            k,
            method,
            seed,
            out,
        }) => {
            let system = match method {
                MethodArg::Greedy => {
                    let seed = seed.ok_or_else(|| Error::validation("--seed is required for the greedy method"))?;
                    greedy_construct(*n, *k, seed)?
                }
                MethodArg::Bose | MethodArg::Skolem if *k != 3 => {
                    return Err(Error::domain("bose and skolem build triple systems (k = 3)"));
                }
                MethodArg::Bose => bose_construct(*n)?,
                MethodArg::Skolem => skolem_construct(*n)?,
            };
            fs::write(out, system.to_text())?;
            let mut m = manifest(*seed);
            if let (MethodArg::Greedy, Some(s)) = (method, seed) {
                m.derived_seeds.insert("greedy".into(), *s);
            }
            m.write_for(out)?;
            let report = density_report(&system, DEFAULT_DENSITY_CONSTANT);
            Ok(Outcome::ok(
                format!("wrote {} blocks to {}", system.len(), out.display()),
                json!({ "blocks": system.len(), "out": out, "density": report }),
            ))
        }
        Command::Design(DesignCmd::Verify { input }) => {
            let text = fs::read_to_string(input)?;
            match PartialSteinerSystem::from_text(&text) {
                Ok(system) => {
                    let report = density_report(&system, DEFAULT_DENSITY_CONSTANT);
                    Ok(Outcome::ok(
                        format!("OK, {} blocks, fill {:.3}", system.len(), report.fill_ratio),
                        json!({ "valid": true, "n": system.n(), "k": system.k(), "t": system.t(), "density": report }),
                    ))
                }
                Err(e @ Error::Validation(_)) => Ok(Outcome {
                    text: format!("INVALID: {e}"),
                    json: json!({ "valid": false, "reason": e.to_string() }),
                    code: 1,
                }),
                Err(e) => Err(e),
            }
        }
        Command::Poly(PolyCmd::Sample {
            design,
            seed,
            rounds,
            q,
            ascent,
            out,
        }) => {
            let system = PartialSteinerSystem::from_text(&fs::read_to_string(design)?)?;
            let mut m = manifest(Some(*seed));
            let (p, estimate) = if *rounds <= 1 {
                let s = round_seed(*seed, 0);
                m.derived_seeds.insert("signs".into(), s);
                (SteinerPolynomial::new(system.clone(), random_signs(&system, s))?, None)
            } else {
                for r in 0..*rounds {
                    m.derived_seeds.insert(format!("round{r}"), round_seed(*seed, r));
                }
                let search = SignSearch::from_full(*rounds, ascent.settings());
                let (p, est) = best_of_signs(&system, *q, &search, *seed)?;
                (p, Some(est))
            };
            fs::write(out, p.to_text())?;
            m.write_for(out)?;
            let text = match &estimate {
                Some(e) => format!("wrote {} terms to {} (norm estimate {:.9})", p.num_terms(), out.display(), e.value),
                None => format!("wrote {} terms to {}", p.num_terms(), out.display()),
            };
            Ok(Outcome::ok(
                text,
                json!({ "terms": p.num_terms(), "out": out, "norm_estimate": estimate.map(|e| e.value) }),
            ))
        }
        Command::Poly(PolyCmd::Norm {
            input,
            q,
            seed,
            ascent,
            oracle,
        }) => {
            let p = SteinerPolynomial::from_text(&fs::read_to_string(input)?)?;
            let est = match oracle {
                Some(res) => brute_force_norm(&p, *q, *res)?,
                None => estimate_norm(&p, *q, &ascent.settings(), *seed)?,
            };
            let certified = est.recertify(&p);
            Ok(Outcome::ok(
                format!(
                    "norm {:.12} (q = {}, method {}, starts {}, certified {})",
                    est.value,
                    est.q,
                    est.method.as_str(),
                    est.starts,
                    certified
                ),
                json!({ "estimate": est, "certified": certified }),
            ))
        }
        Command::Op(OpCmd::Build { poly, out }) => {
            let p = SteinerPolynomial::from_text(&fs::read_to_string(poly)?)?;
            let mut t = build_operators(&p)?;
            let max_norm = t.normalize_to_contractions()?;
            t.write_dir(out)?;
            manifest(None).write_for(out)?;
            Ok(Outcome::ok(
                format!(
                    "wrote {} operators of dimension {} to {} (max norm {:.9}{})",
                    t.n(),
                    t.dim(),
                    out.display(),
                    max_norm,
                    if t.is_normalized() { ", normalized" } else { "" }
                ),
                json!({ "dim": t.dim(), "n": t.n(), "k": t.k(), "max_norm": max_norm, "normalized": t.is_normalized() }),
            ))
        }
        Command::Op(OpCmd::Check { input, tol }) => {
            let t = OperatorTuple::read_dir(input)?;
            let report = op_report(&t, *tol)?;
            let ok = report["commuting"] == json!(true) && report["evaluation_identity"] == json!(true);
            let text = serde_json::to_string_pretty(&report)?;
            Ok(Outcome {
                text,
                json: report,
                code: if ok { 0 } else { 1 },
            })
        }
        Command::Ratio(RatioCmd::Sweep {
            k,
            q,
            r,
            ns,
            seeds_per_n,
            seed,
            budgets,
            out,
        }) => {
            let config = SweepConfig {
                k: *k,
                q: *q,
                r: *r,
                ns: ns.clone(),
                seeds_per_n: *seeds_per_n,
                master_seed: *seed,
                budgets: budgets.budgets(),
                out: Some(out.clone()),
            };
            let mut m = manifest(Some(*seed));
            for &n in ns {
                for s in 0..*seeds_per_n {
                    m.derived_seeds.insert(format!("n={n},s={s}"), config.cell_seed(n, s));
                }
            }
            let res = vnratio::sweep(&config)?;
            m.write_for(out)?;
            Ok(Outcome::ok(
                format!(
                    "wrote {} records ({} failed cells) to {}",
                    res.records.len(),
                    res.failures.len(),
                    out.display()
                ),
                json!({ "records": res.records.len(), "failures": res.failures, "out": out }),
            ))
        }
        Command::Ratio(RatioCmd::Fit {
            input,
            field,
            log_correction,
        }) => {
            let field: FitField = field.parse()?;
            let records = read_records(input)?;
            let fit = fit_exponent(&records, field, *log_correction)?;
            Ok(Outcome::ok(
                format!(
                    "slope {:.6} intercept {:.6} r2 {:.6} points {}",
                    fit.slope,
                    fit.intercept,
                    fit.r_squared,
                    fit.points.len()
                ),
                serde_json::to_value(&fit)?,
            ))
        }
        Command::Ratio(RatioCmd::D32 { n, seed, budgets }) => {
            let rec = vnratio::d32_experiment(*n, *seed, &budgets.budgets())?;
            Ok(Outcome::ok(
                format!(
                    "n {} blocks {} norm_est {:.9} ivp {:.6} (check {}) ratio {:.6} reference {:.6} normalized {:.6}",
                    rec.n,
                    rec.num_blocks,
                    rec.norm_est,
                    rec.ivp_value,
                    if rec.bound_check { "ok" } else { "FLAGGED" },
                    rec.ratio,
                    rec.reference,
                    rec.normalized_ratio
                ),
                serde_json::to_value(&rec)?,
            ))
        }
        Command::Plot(args) => {
            let plot = plot::render(&args.input, &args.x, &args.y, args.loglog)?;
            fs::write(&args.out, &plot.svg)?;
            manifest(None).write_for(&args.out)?;
            let slope = plot.fit.as_ref().map(|f| f.slope);
            Ok(Outcome::ok(
                match slope {
                    Some(s) => format!("wrote {} points to {} (slope {:.3})", plot.points.len(), args.out.display(), s),
                    None => format!("wrote {} points to {}", plot.points.len(), args.out.display()),
                },
                json!({ "points": plot.points.len(), "slope": slope, "out": args.out }),
            ))
        }
    }
}

fn op_report(t: &OperatorTuple, tol: f64) -> Result<serde_json::Value> {
    let p = t.source();
    let failure = check_commuting(t)?;
    let gram = gram_diagonal_check(t)?;
    let s = t.scale_value();
    let norms = t
        .ops()
        .iter()
        .map(|op| operator_norm(op, tol, DEFAULT_MAX_ITERS).map(|v| v * s))
        .collect::<Result<Vec<_>>>()?;
    let b = t.basis();
    let image = apply_polynomial(t, p, &b.unit(b.e()))?;
    let identity = image
        .iter()
        .enumerate()
        .all(|(i, &v)| v == if i == b.g() { p.num_terms() as i64 } else { 0 });
    Ok(json!({
        "dim": t.dim(),
        "n": t.n(),
        "k": t.k(),
        "scale": t.scale(),
        "normalized": t.is_normalized(),
        "commuting": failure.is_none(),
        "commutation_failure": failure,
        "gram": gram,
        "operator_norms": norms,
        "evaluation_identity": identity,
        "polynomial_operator_norm": polynomial_operator_norm(t, p, tol)?,
    }))
}
