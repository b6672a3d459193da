//! Test-suite preparation: the passing-case filter and image → suite labels.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::matching::{eligible_pairs, greedy_assign};
use crate::types::{AnalysisConfig, Detection, GroundTruth, GroundTruthObject, RunOutput};

/// Suite label used when no mapping is supplied.
pub const DEFAULT_SUITE: &str = "all";

/// Recall and precision of one original output against ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseQuality {
    pub recall: f64,
    pub precision: f64,
}

pub fn case_quality(output: &RunOutput, gt: &GroundTruth, iou_threshold: f64) -> CaseQuality {
    let pairs = eligible_pairs(
        &gt.objects,
        &output.detections,
        iou_threshold,
        |o: &GroundTruthObject| (o.bbox, Some(o.label)),
        |d: &Detection| (d.bbox, Some(d.label)),
    );
    let (matched, _, _) = greedy_assign(gt.objects.len(), output.detections.len(), pairs);
    let ratio = |den: usize| {
        if den == 0 {
            1.0
        } else {
            matched.len() as f64 / den as f64
        }
    };
    CaseQuality {
        recall: ratio(gt.objects.len()),
        precision: ratio(output.detections.len()),
    }
}

/// Image ids on which the original model passes against ground truth.
///
/// `original_reference` holds one original output per image; when several runs
/// of an image are present the lowest run index is used.
pub fn filter_passing_cases(
    original_reference: &[RunOutput],
    gt: &[GroundTruth],
    cfg: &AnalysisConfig,
) -> Result<BTreeSet<String>> {
    let mut reference: BTreeMap<&str, &RunOutput> = BTreeMap::new();
    for r in original_reference {
        reference
            .entry(r.image_id.as_str())
            .and_modify(|cur| {
                if r.run < cur.run {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    let mut kept = BTreeSet::new();
    for g in gt {
        let out = reference
            .get(g.image_id.as_str())
            .ok_or_else(|| Error::MissingOriginalOutput(g.image_id.clone()))?;
        let q = case_quality(out, g, cfg.iou_threshold);
        if q.recall >= cfg.recall_floor && q.precision >= cfg.precision_floor {
            kept.insert(g.image_id.clone());
        }
    }
    Ok(kept)
}

/// Parse an image → suite mapping: one `image_id,suite` pair per line.
///
/// Blank lines and lines starting with `#` are skipped. An image may be
/// listed once only.
pub fn parse_suite_map<R: BufRead>(reader: R) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |message: &str| Error::Parse {
            line: i + 1,
            message: message.to_string(),
        };
        let (image, suite) = t.split_once(',').ok_or_else(|| err("expected image_id,suite"))?;
        let (image, suite) = (image.trim(), suite.trim());
        if image.is_empty() || suite.is_empty() || suite.contains(',') {
            return Err(err("expected image_id,suite"));
        }
        if out.insert(image.to_string(), suite.to_string()).is_some() {
            return Err(err(&format!("image {image:?} listed twice")));
        }
    }
    Ok(out)
}
