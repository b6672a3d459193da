//! Rank-based tests, correlation, and the distribution tails they rely on.

mod rank;
pub mod special;

pub use rank::{average_ranks, kruskal_wallis, multiple_correlation, pearson, spearman};
pub use special::{
    binomial_tail_greater, binomial_tail_lesser, chi_square_upper, f_upper, student_t_two_sided,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("non-finite input value")]
    NonFinite,
    #[error("group {0} is empty")]
    EmptyGroup(usize),
    #[error("need at least {needed} observations/groups, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("predictors are collinear (|r| = {0})")]
    Collinear(f64),
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
    #[error("argument out of domain: {0}")]
    Domain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    KruskalWallis,
    Spearman,
    MultipleCorrelation,
}

/// Interpretation label for an effect size or correlation magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Negligible,
    Small,
    Low,
    Moderate,
    High,
    Large,
    VeryHigh,
}

impl Band {
    /// η²: small from 0.01, moderate from 0.06, large from 0.14.
    pub fn eta_squared(eta2: f64) -> Band {
        if eta2 >= 0.14 {
            Band::Large
        } else if eta2 >= 0.06 {
            Band::Moderate
        } else if eta2 >= 0.01 {
            Band::Small
        } else {
            Band::Negligible
        }
    }

    /// Correlation magnitude (Spearman ρ by sign-free magnitude, or R):
    /// low from 0.3, moderate from 0.5, high from 0.7, very high from 0.9.
    pub fn correlation(r: f64) -> Band {
        let r = r.abs();
        if r >= 0.9 {
            Band::VeryHigh
        } else if r >= 0.7 {
            Band::High
        } else if r >= 0.5 {
            Band::Moderate
        } else if r >= 0.3 {
            Band::Low
        } else {
            Band::Negligible
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    pub test: TestKind,
    /// Infinite for a perfect correlation; serialized as `"inf"` / `"-inf"`.
    #[serde(with = "extended_float")]
    pub statistic: f64,
    pub p_value: f64,
    /// η² for Kruskal–Wallis, ρ for Spearman, R for multiple correlation.
    pub effect: Option<f64>,
    pub df: Vec<f64>,
    pub band: Option<Band>,
}

mod extended_float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("invalid statistic {other:?}"))),
            },
        }
    }
}

impl StatResult {
    pub fn is_significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_statistic_round_trips() {
        for statistic in [f64::INFINITY, f64::NEG_INFINITY, 2.5] {
            let r = StatResult {
                test: TestKind::Spearman,
                statistic,
                p_value: 0.0,
                effect: Some(1.0),
                df: vec![7.0],
                band: Some(Band::VeryHigh),
            };
            let text = serde_json::to_string(&r).unwrap();
            let back: StatResult = serde_json::from_str(&text).unwrap();
            assert_eq!(back, r);
        }
        let text = serde_json::to_string(&StatResult {
            test: TestKind::Spearman,
            statistic: f64::INFINITY,
            p_value: 0.0,
            effect: None,
            df: vec![],
            band: None,
        })
        .unwrap();
        assert!(text.contains("\"statistic\":\"inf\""));
    }
}
