//! Domain types shared by every stage of the analysis.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed deviation of a probability vector's sum from 1.
pub const PROBS_SUM_TOLERANCE: f64 = 1e-6;

/// Model id of the unmutated model in record files.
pub const ORIGINAL_MODEL_ID: &str = "original";

/// Axis-aligned box in pixel coordinates, `x1 < x2`, `y1 < y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("bbox", "coordinates must be finite"));
        }
        if x1 >= x2 || y1 >= y2 {
            return Err(Error::invalid(
                "bbox",
                format!("expected x1 < x2 and y1 < y2, got [{x1}, {y1}, {x2}, {y2}]"),
            ));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Corners in the order top-left, top-right, bottom-left, bottom-right.
    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.x1, self.y1),
            (self.x2, self.y1),
            (self.x1, self.y2),
            (self.x2, self.y2),
        ]
    }

    /// Component-wise mean of a non-empty set of boxes.
    pub fn centroid<'a, I>(boxes: I) -> Option<BBox>
    where
        I: IntoIterator<Item = &'a BBox>,
    {
        let mut sum = [0.0; 4];
        let mut n = 0usize;
        for b in boxes {
            for (s, c) in sum.iter_mut().zip(b.coords()) {
                *s += c;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let k = n as f64;
        Some(BBox {
            x1: sum[0] / k,
            y1: sum[1] / k,
            x2: sum[2] / k,
            y2: sum[3] / k,
        })
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.coords()
    }
}

/// One predicted object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub label: usize,
    pub score: f64,
    pub probs: Vec<f64>,
}

impl Detection {
    pub fn new(bbox: BBox, label: usize, score: f64, probs: Vec<f64>) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::invalid("score", format!("{score} outside [0, 1]")));
        }
        if probs.is_empty() {
            return Err(Error::invalid("probs", "probability vector is empty"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("probs", "elements must lie in [0, 1]"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > PROBS_SUM_TOLERANCE {
            return Err(Error::invalid("probs", format!("sum is {sum}, expected 1")));
        }
        if label >= probs.len() {
            return Err(Error::invalid(
                "label",
                format!("label {label} out of range for {} classes", probs.len()),
            ));
        }
        Ok(Self {
            bbox,
            label,
            score,
            probs,
        })
    }

    /// Detection whose probability vector is one-hot at `label`, length `label + 1`.
    pub fn one_hot(bbox: BBox, label: usize, score: f64) -> Result<Self> {
        let mut probs = vec![0.0; label + 1];
        probs[label] = 1.0;
        Self::new(bbox, label, score, probs)
    }

    /// Index of the largest class probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = k;
            }
        }
        best
    }
}

/// All detections of one (model, image, run) execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub model_id: String,
    pub image_id: String,
    pub run: u32,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthObject {
    pub bbox: BBox,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub objects: Vec<GroundTruthObject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    /// Inference-time dropout.
    Mcd,
    /// Inference-time dropblock.
    Mcb,
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Mcd => "mcd",
            Operator::Mcb => "mcb",
        })
    }
}

impl FromStr for Operator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcd" => Ok(Operator::Mcd),
            "mcb" => Ok(Operator::Mcb),
            _ => Err(Error::invalid("operator", format!("unknown operator {s:?}"))),
        }
    }
}

/// Operator plus mutation ratio(s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationConfig {
    pub operator: Operator,
    pub dropout_rate: f64,
    pub block_size: Option<u32>,
}

impl MutationConfig {
    pub fn mcd(dropout_rate: f64) -> Result<Self> {
        let cfg = Self {
            operator: Operator::Mcd,
            dropout_rate,
            block_size: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn mcb(dropout_rate: f64, block_size: u32) -> Result<Self> {
        let cfg = Self {
            operator: Operator::Mcb,
            dropout_rate,
            block_size: Some(block_size),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dropout_rate > 0.0 && self.dropout_rate < 1.0) {
            return Err(Error::invalid(
                "dropout_rate",
                format!("{} outside (0, 1)", self.dropout_rate),
            ));
        }
        match (self.operator, self.block_size) {
            (Operator::Mcd, None) => Ok(()),
            (Operator::Mcd, Some(_)) => {
                Err(Error::invalid("block_size", "MCD takes no block size"))
            }
            (Operator::Mcb, Some(b)) if b % 2 == 1 => Ok(()),
            (Operator::Mcb, Some(b)) => Err(Error::invalid(
                "block_size",
                format!("block size must be odd and positive, got {b}"),
            )),
            (Operator::Mcb, None) => Err(Error::invalid("block_size", "MCB requires a block size")),
        }
    }

    /// Canonical model id: `mcd:<rate>` or `mcb:<rate>x<block>`.
    pub fn model_id(&self) -> String {
        self.to_string()
    }

    /// The nine dropout rates 0.10, 0.15, ..., 0.50.
    pub fn dropout_grid() -> Vec<f64> {
        (0..9).map(|i| (10 + 5 * i) as f64 / 100.0).collect()
    }

    pub const BLOCK_SIZES: [u32; 5] = [1, 3, 5, 7, 9];

    pub fn mcd_grid() -> Vec<MutationConfig> {
        Self::dropout_grid()
            .into_iter()
            .map(|d| MutationConfig::mcd(d).expect("grid rate is valid"))
            .collect()
    }

    /// All 45 (rate, block size) combinations, rate-major.
    pub fn mcb_grid() -> Vec<MutationConfig> {
        let mut out = Vec::with_capacity(45);
        for d in Self::dropout_grid() {
            for b in Self::BLOCK_SIZES {
                out.push(MutationConfig::mcb(d, b).expect("grid ratio is valid"));
            }
        }
        out
    }
}

impl fmt::Display for MutationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.block_size {
            Some(b) => write!(f, "{}:{:.2}x{}", self.operator, self.dropout_rate, b),
            None => write!(f, "{}:{:.2}", self.operator, self.dropout_rate),
        }
    }
}

impl FromStr for MutationConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ModelId(s.to_string());
        let (op, ratio) = s.split_once(':').ok_or_else(bad)?;
        let (rate, block) = match op {
            "mcd" => (ratio, None),
            "mcb" => {
                let (rate, block) = ratio.split_once('x').ok_or_else(bad)?;
                if block.is_empty() || !block.bytes().all(|c| c.is_ascii_digit()) {
                    return Err(bad());
                }
                (rate, Some(block.parse::<u32>().map_err(|_| bad())?))
            }
            _ => return Err(bad()),
        };
        // exactly two decimals, e.g. "0.25"
        let (int, frac) = rate.split_once('.').ok_or_else(bad)?;
        if int.is_empty()
            || frac.len() != 2
            || !int.bytes().chain(frac.bytes()).all(|c| c.is_ascii_digit())
        {
            return Err(bad());
        }
        let dropout_rate: f64 = rate.parse().map_err(|_| bad())?;
        let cfg = match block {
            None => MutationConfig::mcd(dropout_rate),
            Some(b) => MutationConfig::mcb(dropout_rate, b),
        }
        .map_err(|_| bad())?;
        if cfg.to_string() != s {
            return Err(bad());
        }
        Ok(cfg)
    }
}

/// A parsed `model_id`: the original model or a mutant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelId {
    Original,
    Mutant(MutationConfig),
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == ORIGINAL_MODEL_ID {
            Ok(ModelId::Original)
        } else {
            s.parse().map(ModelId::Mutant)
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelId::Original => f.write_str(ORIGINAL_MODEL_ID),
            ModelId::Mutant(cfg) => cfg.fmt(f),
        }
    }
}

/// Thresholds and sizes that drive one analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub iou_threshold: f64,
    pub alpha: f64,
    pub n_runs: usize,
    pub miss_threshold: f64,
    pub binomial_null_p: f64,
    pub recall_floor: f64,
    pub precision_floor: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            alpha: 0.01,
            n_runs: 30,
            miss_threshold: 0.5,
            binomial_null_p: 0.05,
            recall_floor: 1.0,
            precision_floor: 0.0,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.iou_threshold) {
            return Err(Error::invalid("iou_threshold", "must lie in (0, 1)"));
        }
        if !open_unit(self.alpha) {
            return Err(Error::invalid("alpha", "must lie in (0, 1)"));
        }
        if self.n_runs < 2 {
            return Err(Error::invalid("n_runs", "at least 2 runs are required"));
        }
        if !(self.miss_threshold > 0.0 && self.miss_threshold <= 1.0) {
            return Err(Error::invalid("miss_threshold", "must lie in (0, 1]"));
        }
        if !open_unit(self.binomial_null_p) {
            return Err(Error::invalid("binomial_null_p", "must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.recall_floor) {
            return Err(Error::invalid("recall_floor", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.precision_floor) {
            return Err(Error::invalid("precision_floor", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Parse a flat `key = value` config file. Unknown keys are rejected.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            Error::Config(e.message().to_string())
        })?;
        let mut cfg = AnalysisConfig::default();
        for (key, value) in &table {
            let number = match value {
                toml::Value::Integer(i) => *i as f64,
                toml::Value::Float(f) => *f,
                other => {
                    return Err(Error::Config(format!(
                        "{key}: expected a number, got {}",
                        other.type_str()
                    )))
                }
            };
            match key.as_str() {
                "iou_threshold" => cfg.iou_threshold = number,
                "alpha" => cfg.alpha = number,
                "n_runs" => {
                    if number.fract() != 0.0 || number < 0.0 {
                        return Err(Error::Config("n_runs: expected a non-negative integer".into()));
                    }
                    cfg.n_runs = number as usize;
                }
                "miss_threshold" => cfg.miss_threshold = number,
                "binomial_null_p" => cfg.binomial_null_p = number,
                "recall_floor" => cfg.recall_floor = number,
                "precision_floor" => cfg.precision_floor = number,
                _ => return Err(Error::Config(format!("unknown key {key:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
