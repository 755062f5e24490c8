use std::collections::BTreeMap;
use std::str::FromStr;

use serde::Serialize;

use super::RatioRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitField {
    Ratio,
    FloorRatio,
}

impl FitField {
    fn get(self, r: &RatioRecord) -> f64 {
        match self {
            FitField::Ratio => r.ratio,
            FitField::FloorRatio => r.floor_ratio,
        }
    }
}

impl FromStr for FitField {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(FitField::Ratio),
            "floor_ratio" => Ok(FitField::FloorRatio),
            other => Err(Error::validation(format!(
                "unknown fit field `{other}` (expected ratio or floor_ratio)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(ln n, ln value)` after aggregation and log correction.
    pub points: Vec<(f64, f64)>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn fit_points(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::validation("a line fit needs at least two points"));
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::validation("a line fit needs at least two distinct x values"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

/// Fits `ln(value / ln^c n)` against `ln n`, where `value` is the median of
/// `field` over the seeds at each `n`. Nonpositive or non-finite values are
/// dropped with a warning.
pub fn fit_exponent(records: &[RatioRecord], field: FitField, log_correction: f64) -> Result<FitResult> {
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records {
        let v = field.get(r);
        if v > 0.0 && v.is_finite() {
            by_n.entry(r.n).or_default().push(v);
        } else {
            log::warn!("excluding nonpositive value {v} at n = {}, seed = {}", r.n, r.seed);
        }
    }
    if by_n.len() < 3 {
        return Err(Error::validation(format!(
            "fit needs at least 3 distinct n with positive values, got {}",
            by_n.len()
        )));
    }
    let points: Vec<(f64, f64)> = by_n
        .into_iter()
        .map(|(n, mut vals)| {
            let ln = (n as f64).ln();
            (ln, median(&mut vals).ln() - log_correction * ln.ln())
        })
        .collect();
    fit_points(&points)
}
