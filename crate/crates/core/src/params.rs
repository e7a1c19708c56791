use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Design constants shared by calibration, decisions, and simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignParams {
    /// Target DLT probability.
    pub p_t: f64,
    /// Equivalence interval is `[p_t - eps1, p_t + eps2]`.
    pub eps1: f64,
    pub eps2: f64,
    /// Posterior tail threshold for the safety rules.
    pub xi: f64,
    /// Initial vague prior `beta(a0, b0)`.
    pub a0: f64,
    pub b0: f64,
    /// Largest tolerated share of more aggressive table cells.
    pub alpha: f64,
    /// Ceiling on each dose's effective prior sample size; may be infinite.
    #[serde(serialize_with = "ser_ceiling", deserialize_with = "de_ceiling")]
    pub k: f64,
    pub cohort_size: u32,
    pub max_n: u32,
    /// Largest per-dose sample size covered by decision tables.
    pub table_cap: u32,
}

impl Default for DesignParams {
    fn default() -> Self {
        Self {
            p_t: 0.3,
            eps1: 0.05,
            eps2: 0.05,
            xi: 0.95,
            a0: 0.005,
            b0: 0.005,
            alpha: 0.1,
            k: 9.0,
            cohort_size: 3,
            max_n: 30,
            table_cap: 15,
        }
    }
}

impl DesignParams {
    pub fn ei_lower(&self) -> f64 {
        self.p_t - self.eps1
    }

    pub fn ei_upper(&self) -> f64 {
        self.p_t + self.eps2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::InvalidParameter(format!("{field}: {msg}")));
        let finite = [
            ("p_t", self.p_t),
            ("eps1", self.eps1),
            ("eps2", self.eps2),
            ("xi", self.xi),
            ("a0", self.a0),
            ("b0", self.b0),
            ("alpha", self.alpha),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return bad(name, format!("must be finite, got {v}"));
            }
        }
        if self.eps1 <= 0.0 || self.eps2 <= 0.0 {
            return bad("eps1/eps2", "must be positive".into());
        }
        if !(0.0 < self.ei_lower() && self.ei_lower() < self.ei_upper() && self.ei_upper() < 1.0) {
            return bad(
                "p_t",
                format!(
                    "need 0 < p_t - eps1 < p_t + eps2 < 1, got ({}, {})",
                    self.ei_lower(),
                    self.ei_upper()
                ),
            );
        }
        if !(0.5..1.0).contains(&self.xi) {
            return bad("xi", format!("must lie in [0.5, 1), got {}", self.xi));
        }
        if self.a0 <= 0.0 || self.b0 <= 0.0 {
            return bad("a0/b0", "initial prior shapes must be positive".into());
        }
        if self.a0 > 1.0 || self.b0 > 1.0 {
            return bad("a0/b0", "initial prior shapes above 1 are not supported".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", format!("must lie in [0, 1], got {}", self.alpha));
        }
        if self.k.is_nan() || self.k <= self.a0 + self.b0 {
            return bad("k", format!("must exceed a0 + b0, got {}", self.k));
        }
        if self.cohort_size == 0 {
            return bad("cohort_size", "must be positive".into());
        }
        if self.max_n == 0 {
            return bad("max_n", "must be positive".into());
        }
        if self.table_cap == 0 {
            return bad("table_cap", "must be positive".into());
        }
        Ok(())
    }
}

fn ser_ceiling<S: Serializer>(k: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if k.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*k)
    }
}

fn de_ceiling<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Ceiling {
        Number(f64),
        Text(String),
    }
    match Ceiling::deserialize(d)? {
        Ceiling::Number(v) => Ok(v),
        Ceiling::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
            other => Err(serde::de::Error::custom(format!(
                "k must be a number or \"inf\", got {other:?}"
            ))),
        },
    }
}
