use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Norm order `p` in [1, ∞].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormOrder {
    Finite(f64),
    Infinity,
}

impl NormOrder {
    pub fn finite(p: f64) -> Result<Self> {
        if p >= 1.0 && p.is_finite() {
            Ok(NormOrder::Finite(p))
        } else {
            Err(Error::InvalidArgument(format!("norm order {p} must be >= 1")))
        }
    }

    /// `1/p`, with the convention `1/∞ = 0`.
    pub fn reciprocal(&self) -> f64 {
        match self {
            NormOrder::Finite(p) => 1.0 / p,
            NormOrder::Infinity => 0.0,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, NormOrder::Infinity)
    }
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormOrder::Finite(p) => write!(f, "{p}"),
            NormOrder::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "Inf" | "∞" => Ok(NormOrder::Infinity),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad norm order `{other}`")))
                .and_then(NormOrder::finite),
        }
    }
}
