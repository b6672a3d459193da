//! End-to-end scoring of a record set: validation, the passing-case filter,
//! per-image matching and tracking, and per-(mutant, suite) score tables.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::validate_run_set;
use crate::matching::{build_tracks, classify_tracks, match_outputs, MatchReport, ObjectTrack};
use crate::report::{ImageAccounting, KillRow, NullSource, Report, ReportRow};
use crate::scores::{
    aggregate, kill_verdicts, Criterion, ImageReports, KillVerdict, ScoreInputs, ScoreTable,
};
use crate::suite::{filter_passing_cases, DEFAULT_SUITE};
use crate::types::{AnalysisConfig, GroundTruth, MutationConfig, RunOutput, ORIGINAL_MODEL_ID};

/// Inputs of one analysis beyond the config.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalysisInput<'a> {
    pub records: &'a [RunOutput],
    /// When present, only images the original model passes are analysed.
    pub ground_truth: Option<&'a [GroundTruth]>,
    /// image id → suite label. Images without a label are left out.
    pub suites: Option<&'a BTreeMap<String, String>>,
    /// Estimate the binomial null rate from original-vs-original runs instead
    /// of using `binomial_null_p`.
    pub calibrate_null_p: bool,
}

/// Runs of one model grouped by image, each image's runs in run order.
type ModelRuns<'a> = BTreeMap<&'a str, Vec<&'a RunOutput>>;

fn group_records(records: &[RunOutput]) -> BTreeMap<&str, ModelRuns<'_>> {
    let mut grid: BTreeMap<&str, ModelRuns<'_>> = BTreeMap::new();
    for r in records {
        grid.entry(r.model_id.as_str())
            .or_default()
            .entry(r.image_id.as_str())
            .or_default()
            .push(r);
    }
    for runs in grid.values_mut().flat_map(|m| m.values_mut()) {
        runs.sort_by_key(|r| r.run);
    }
    grid
}

fn owned(runs: &[&RunOutput]) -> Vec<RunOutput> {
    runs.iter().map(|r| (*r).clone()).collect()
}

/// Null rate for the kill test estimated from how often original runs
/// diverge from the reference run under the miss-or-ghost criterion.
///
/// Uses the add-one-half estimate `(k + 0.5) / (m + 1)` over the `m` compared
/// runs, so a fully deterministic original still yields a rate in (0, 1).
pub fn estimate_null_p(original: &[(&RunOutput, &[&RunOutput])], iou_threshold: f64) -> f64 {
    let mut fired = 0usize;
    let mut total = 0usize;
    for (reference, runs) in original {
        for r in runs.iter().filter(|r| r.run != reference.run) {
            let report = match_outputs(&reference.detections, &r.detections, iou_threshold);
            fired += usize::from(Criterion::Mg.fires(&report));
            total += 1;
        }
    }
    (fired as f64 + 0.5) / (total as f64 + 1.0)
}

struct ImageOutcome {
    reports: Vec<MatchReport>,
    inputs: ScoreInputs,
}

fn score_image(
    reference: &RunOutput,
    original_tracks: &[ObjectTrack],
    runs: &[&RunOutput],
    cfg: &AnalysisConfig,
) -> Result<ImageOutcome> {
    let reports: Vec<MatchReport> = runs
        .iter()
        .map(|r| match_outputs(&reference.detections, &r.detections, cfg.iou_threshold))
        .collect();
    let tracks = build_tracks(reference, &owned(runs), cfg.iou_threshold)?;
    let assignments = classify_tracks(&tracks, cfg.miss_threshold);
    let mut inputs = ScoreInputs::default();
    for report in &reports {
        inputs.counts.add(report);
        inputs.iou.add(report);
    }
    inputs.ua.add_image(original_tracks, &tracks, &assignments);
    Ok(ImageOutcome { reports, inputs })
}

/// Score every mutant in `input.records` against the original model.
pub fn analyze(input: &AnalysisInput<'_>, cfg: &AnalysisConfig) -> Result<Report> {
    cfg.validate()?;
    let validation = validate_run_set(input.records, cfg.n_runs);
    if !validation.is_complete() {
        return Err(Error::RunSet(Box::new(validation)));
    }
    let grid = group_records(input.records);
    let original = grid.get(ORIGINAL_MODEL_ID).ok_or(Error::MissingOriginal)?;

    let mut mutants: Vec<(MutationConfig, &ModelRuns<'_>)> = Vec::new();
    for (id, runs) in &grid {
        if *id != ORIGINAL_MODEL_ID {
            let cfg: MutationConfig = id.parse()?;
            mutants.push((cfg, runs));
        }
    }
    mutants.sort_by(|a, b| {
        a.0.operator
            .cmp(&b.0.operator)
            .then(a.0.dropout_rate.total_cmp(&b.0.dropout_rate))
            .then(a.0.block_size.cmp(&b.0.block_size))
    });

    let all_images: Vec<&str> = original.keys().copied().collect();
    let mut dropped_by_filter = Vec::new();
    let passing: BTreeSet<&str> = match input.ground_truth {
        Some(gt) => {
            let references: Vec<RunOutput> = original.values().map(|runs| runs[0].clone()).collect();
            let kept = filter_passing_cases(&references, gt, cfg)?;
            let passing: BTreeSet<&str> = all_images
                .iter()
                .copied()
                .filter(|img| kept.contains(*img))
                .collect();
            dropped_by_filter = all_images
                .iter()
                .filter(|img| !passing.contains(**img))
                .map(|img| img.to_string())
                .collect();
            passing
        }
        None => all_images.iter().copied().collect(),
    };

    let mut unassigned = Vec::new();
    let mut suite_images: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for img in &passing {
        let label = match input.suites {
            Some(map) => match map.get(*img) {
                Some(label) => label.clone(),
                None => {
                    unassigned.push(img.to_string());
                    continue;
                }
            },
            None => DEFAULT_SUITE.to_string(),
        };
        suite_images.entry(label).or_default().push(img);
    }
    let images: Vec<&str> = suite_images.values().flatten().copied().collect();

    let (null_p, null_source) = if input.calibrate_null_p {
        let pairs: Vec<(&RunOutput, &[&RunOutput])> = images
            .iter()
            .map(|img| {
                let runs = &original[img];
                (runs[0], runs.as_slice())
            })
            .collect();
        (estimate_null_p(&pairs, cfg.iou_threshold), NullSource::Calibrated)
    } else {
        (cfg.binomial_null_p, NullSource::Configured)
    };
    let kill_cfg = AnalysisConfig {
        binomial_null_p: null_p,
        ..cfg.clone()
    };

    let original_tracks: BTreeMap<&str, Vec<ObjectTrack>> = images
        .par_iter()
        .map(|img| {
            let runs = &original[img];
            build_tracks(runs[0], &owned(runs), cfg.iou_threshold).map(|t| (*img, t))
        })
        .collect::<Result<_>>()?;

    let per_mutant: Vec<Vec<(ScoreTable, [KillVerdict; 3])>> = mutants
        .par_iter()
        .map(|(mcfg, runs)| {
            let mutant_id = mcfg.model_id();
            let mut outcomes: BTreeMap<&str, ImageOutcome> = BTreeMap::new();
            for img in &images {
                let outcome = score_image(original[img][0], &original_tracks[img], &runs[img], cfg)?;
                outcomes.insert(img, outcome);
            }
            let mut out = Vec::new();
            for (suite, imgs) in &suite_images {
                let mut inputs = ScoreInputs::default();
                let mut per_image = Vec::with_capacity(imgs.len());
                for img in imgs {
                    let o = &outcomes[img];
                    inputs.merge(&o.inputs);
                    per_image.push(ImageReports {
                        image_id: img,
                        reports: &o.reports,
                    });
                }
                let kills = kill_verdicts(&mutant_id, &per_image, &kill_cfg)?;
                out.push((inputs.into_table(&mutant_id, suite, &kills), kills));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut kills = Vec::new();
    let mut summaries = Vec::new();
    for (s, (suite, imgs)) in suite_images.iter().enumerate() {
        let mut tables = Vec::with_capacity(mutants.len());
        for ((mcfg, _), cells) in mutants.iter().zip(&per_mutant) {
            let (table, verdicts) = &cells[s];
            rows.push(ReportRow::new(mcfg, imgs.len(), table));
            kills.extend(verdicts.iter().map(|v| KillRow {
                suite: suite.clone(),
                verdict: v.clone(),
            }));
            tables.push(table.clone());
        }
        summaries.push(aggregate(suite, &tables));
    }

    Ok(Report {
        config: cfg.clone(),
        null_p,
        null_source,
        images: ImageAccounting {
            total: all_images.len(),
            analysed: images.len(),
            dropped_by_filter,
            unassigned,
        },
        warnings: validation.warnings.len(),
        rows,
        kills,
        suites: summaries,
    })
}
