//! Line-delimited record ingestion, serialization and run-set validation.
//!
//! Each non-blank line is one JSON object:
//!
//! ```text
//! {"model_id": "mcd:0.25", "image_id": "img_001", "run": 3,
//!  "detections": [{"bbox": [x1, y1, x2, y2], "label": 0, "score": 0.9, "probs": [0.9, 0.1]}]}
//! ```
//!
//! `probs` is optional; a missing vector is replaced by a one-hot vector at `label`.
//! Lines starting with `#` are header/comment lines and are skipped. Ground-truth
//! files use the same layout without `run`, `score` and `probs`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    BBox, Detection, GroundTruth, GroundTruthObject, ModelId, RunOutput, ORIGINAL_MODEL_ID,
};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireDetection {
    bbox: [f64; 4],
    label: i64,
    score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    probs: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    model_id: String,
    image_id: String,
    run: i64,
    detections: Vec<WireDetection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireGtObject {
    bbox: [f64; 4],
    label: i64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireGroundTruth {
    #[serde(default)]
    #[allow(dead_code)]
    model_id: Option<String>,
    image_id: String,
    detections: Vec<WireGtObject>,
}

fn record_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Err(e) => Some(Err(Error::Io(e))),
            Ok(l) => {
                let t = l.trim();
                if t.is_empty() || t.starts_with('#') {
                    None
                } else {
                    Some(Ok((i + 1, l)))
                }
            }
        })
}

fn at_line(line: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Invalid { field, message } => Error::InvalidRecord {
            line,
            field,
            message,
        },
        other => other,
    }
}

fn label_from(raw: i64) -> Result<usize> {
    usize::try_from(raw).map_err(|_| Error::invalid("label", format!("{raw} is negative")))
}

fn bbox_from(c: [f64; 4]) -> Result<BBox> {
    BBox::new(c[0], c[1], c[2], c[3])
}

fn detection_from(w: WireDetection) -> Result<Detection> {
    let bbox = bbox_from(w.bbox)?;
    let label = label_from(w.label)?;
    match w.probs {
        Some(probs) => Detection::new(bbox, label, w.score, probs),
        None => Detection::one_hot(bbox, label, w.score),
    }
}

fn record_from(w: WireRecord) -> Result<RunOutput> {
    if w.model_id.is_empty() {
        return Err(Error::invalid("model_id", "empty"));
    }
    if w.image_id.is_empty() {
        return Err(Error::invalid("image_id", "empty"));
    }
    let run = u32::try_from(w.run)
        .map_err(|_| Error::invalid("run", format!("{} is not a valid run index", w.run)))?;
    let detections = w
        .detections
        .into_iter()
        .map(detection_from)
        .collect::<Result<Vec<_>>>()?;
    Ok(RunOutput {
        model_id: w.model_id,
        image_id: w.image_id,
        run,
        detections,
    })
}

/// Parse one record line.
pub fn parse_record_line(line: &str, line_no: usize) -> Result<RunOutput> {
    let wire: WireRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    record_from(wire).map_err(at_line(line_no))
}

/// Parse a line-delimited record stream, preserving order.
pub fn parse_records<R: BufRead>(reader: R) -> Result<Vec<RunOutput>> {
    record_lines(reader)
        .map(|l| l.and_then(|(n, text)| parse_record_line(&text, n)))
        .collect()
}

pub fn parse_ground_truth<R: BufRead>(reader: R) -> Result<Vec<GroundTruth>> {
    record_lines(reader)
        .map(|l| {
            let (n, text) = l?;
            let wire: WireGroundTruth = serde_json::from_str(&text).map_err(|e| Error::Parse {
                line: n,
                message: e.to_string(),
            })?;
            let objects = wire
                .detections
                .into_iter()
                .map(|o| {
                    Ok(GroundTruthObject {
                        bbox: bbox_from(o.bbox)?,
                        label: label_from(o.label)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map_err(at_line(n))?;
            Ok(GroundTruth {
                image_id: wire.image_id,
                objects,
            })
        })
        .collect()
}

/// Serialize one record as a single JSON line (no trailing newline).
pub fn record_to_line(record: &RunOutput) -> String {
    let wire = WireRecord {
        model_id: record.model_id.clone(),
        image_id: record.image_id.clone(),
        run: i64::from(record.run),
        detections: record
            .detections
            .iter()
            .map(|d| WireDetection {
                bbox: d.bbox.coords(),
                label: d.label as i64,
                score: d.score,
                probs: Some(d.probs.clone()),
            })
            .collect(),
    };
    serde_json::to_string(&wire).expect("record serialization cannot fail")
}

pub fn write_records<W: Write>(mut out: W, records: &[RunOutput]) -> Result<()> {
    for r in records {
        writeln!(out, "{}", record_to_line(r))?;
    }
    Ok(())
}

pub fn write_ground_truth<W: Write>(mut out: W, gt: &[GroundTruth]) -> Result<()> {
    for g in gt {
        let objects: Vec<_> = g
            .objects
            .iter()
            .map(|o| serde_json::json!({"bbox": o.bbox.coords(), "label": o.label}))
            .collect();
        let line = serde_json::json!({"image_id": g.image_id, "detections": objects});
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DefectKind {
    /// Run indices in `0..n_runs` with no record.
    Missing { runs: Vec<u32> },
    /// More than one record for the same run index.
    Duplicate { run: u32 },
    /// Run index at or beyond `n_runs`.
    OutOfRange { run: u32 },
    /// The original model has records for this image but this model has none.
    MissingImage,
    /// `model_id` is neither `original` nor a valid mutant id.
    InvalidModelId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Defect {
    pub model_id: String,
    pub image_id: String,
    #[serde(flatten)]
    pub kind: DefectKind,
}

/// A detection whose `label` differs from the argmax of its `probs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelWarning {
    pub model_id: String,
    pub image_id: String,
    pub run: u32,
    pub detection: usize,
    pub label: usize,
    pub argmax: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_runs: usize,
    pub models: usize,
    pub images: usize,
    pub complete: bool,
    pub defects: Vec<Defect>,
    pub warnings: Vec<LabelWarning>,
}

impl ValidationReport {
    pub fn is_complete(&self) -> bool {
        self.complete
    }
}

/// Check that every (model, image) pair carries exactly the run indices `0..n_runs`.
pub fn validate_run_set(records: &[RunOutput], n_runs: usize) -> ValidationReport {
    let mut grid: BTreeMap<&str, BTreeMap<&str, Vec<u32>>> = BTreeMap::new();
    let mut warnings = Vec::new();
    for r in records {
        grid.entry(r.model_id.as_str())
            .or_default()
            .entry(r.image_id.as_str())
            .or_default()
            .push(r.run);
        for (i, d) in r.detections.iter().enumerate() {
            let argmax = d.argmax();
            if argmax != d.label {
                warnings.push(LabelWarning {
                    model_id: r.model_id.clone(),
                    image_id: r.image_id.clone(),
                    run: r.run,
                    detection: i,
                    label: d.label,
                    argmax,
                });
            }
        }
    }

    let original_images: BTreeSet<&str> = grid
        .get(ORIGINAL_MODEL_ID)
        .map(|m| m.keys().copied().collect())
        .unwrap_or_default();
    let all_images: BTreeSet<&str> = grid.values().flat_map(|m| m.keys().copied()).collect();

    let mut defects = Vec::new();
    for (model, images) in &grid {
        if model.parse::<ModelId>().is_err() {
            defects.push(Defect {
                model_id: model.to_string(),
                image_id: String::new(),
                kind: DefectKind::InvalidModelId,
            });
        }
        for (image, runs) in images {
            let mut runs = runs.clone();
            runs.sort_unstable();
            let present: BTreeSet<u32> = runs.iter().copied().collect();
            for w in runs.windows(2) {
                if w[0] == w[1] {
                    defects.push(Defect {
                        model_id: model.to_string(),
                        image_id: image.to_string(),
                        kind: DefectKind::Duplicate { run: w[0] },
                    });
                }
            }
            for &run in &present {
                if run as usize >= n_runs {
                    defects.push(Defect {
                        model_id: model.to_string(),
                        image_id: image.to_string(),
                        kind: DefectKind::OutOfRange { run },
                    });
                }
            }
            let missing: Vec<u32> = (0..n_runs as u32).filter(|r| !present.contains(r)).collect();
            if !missing.is_empty() {
                defects.push(Defect {
                    model_id: model.to_string(),
                    image_id: image.to_string(),
                    kind: DefectKind::Missing { runs: missing },
                });
            }
        }
        for image in &original_images {
            if !images.contains_key(image) {
                defects.push(Defect {
                    model_id: model.to_string(),
                    image_id: image.to_string(),
                    kind: DefectKind::MissingImage,
                });
            }
        }
    }

    ValidationReport {
        n_runs,
        models: grid.len(),
        images: all_images.len(),
        complete: defects.is_empty(),
        defects,
        warnings,
    }
}
