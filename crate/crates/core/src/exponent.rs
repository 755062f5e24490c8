use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An exponent `q ∈ [1, ∞]` selecting the ℓ_q norm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Exponent(f64);

impl Exponent {
    pub const ONE: Exponent = Exponent(1.0);
    pub const TWO: Exponent = Exponent(2.0);
    pub const INFINITY: Exponent = Exponent(f64::INFINITY);

    pub fn new(q: f64) -> Result<Self> {
        if q.is_nan() || q < 1.0 {
            return Err(Error::domain(format!("exponent q = {q} must lie in [1, inf]")));
        }
        Ok(Exponent(q))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// `1/q`, which is `0` at `q = ∞`.
    pub fn reciprocal(self) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            1.0 / self.0
        }
    }

    /// Hölder conjugate `q'` with `1/q + 1/q' = 1`.
    pub fn conjugate(self) -> Exponent {
        let r = 1.0 - self.reciprocal();
        if r == 0.0 {
            Exponent::INFINITY
        } else {
            Exponent(1.0 / r)
        }
    }

    /// ℓ_q norm of a slice of moduli.
    pub fn norm_of(self, moduli: &[f64]) -> f64 {
        let max = moduli.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        if self.is_infinite() || max == 0.0 {
            return max;
        }
        if self.0 == 1.0 {
            return moduli.iter().map(|x| x.abs()).sum();
        }
        if self.0 == 2.0 {
            return moduli.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        let q = self.0;
        // scaled by the max entry so large q cannot overflow
        let s: f64 = moduli.iter().map(|x| (x.abs() / max).powf(q)).sum();
        max * s.powf(1.0 / q)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Exponent::INFINITY),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::validation(format!("cannot parse exponent '{s}'")))
                .and_then(Exponent::new),
        }
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_infinite() {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(q) => Exponent::new(q).map_err(serde::de::Error::custom),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}
