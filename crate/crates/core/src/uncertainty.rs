//! Uncertainty metrics over one object track.
//!
//! Classification metrics (VR, SE, MI) use the labels and probability vectors
//! of the runs in which the object is present; regression metrics (TV, PS)
//! use its boxes. Absent runs are ignored. Entropies are in nats, variances
//! are population variances in pixels².

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::convex_hull_area;
use crate::matching::ObjectTrack;
use crate::types::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("track has no present runs; uncertainty is undefined")]
pub struct NoPresentRuns;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Vr,
    Se,
    Mi,
    Tv,
    Ps,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Vr, Metric::Se, Metric::Mi, Metric::Tv, Metric::Ps];

    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Vr => "vr",
            Metric::Se => "se",
            Metric::Mi => "mi",
            Metric::Tv => "tv",
            Metric::Ps => "ps",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySummary {
    pub vr: f64,
    pub se: f64,
    pub mi: f64,
    pub tv: f64,
    pub ps: f64,
    pub n_present: usize,
}

impl UncertaintySummary {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Vr => self.vr,
            Metric::Se => self.se,
            Metric::Mi => self.mi,
            Metric::Tv => self.tv,
            Metric::Ps => self.ps,
        }
    }
}

fn present(track: &ObjectTrack) -> Result<Vec<&Detection>, NoPresentRuns> {
    let dets: Vec<_> = track.present().collect();
    if dets.is_empty() {
        Err(NoPresentRuns)
    } else {
        Ok(dets)
    }
}

/// `-Σ p ln p` with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    h.max(0.0)
}

/// Mean probability vector; shorter vectors are zero-padded to the longest.
fn mean_probs(dets: &[&Detection]) -> Vec<f64> {
    let k = dets.iter().map(|d| d.probs.len()).max().unwrap_or(0);
    let mut mean = vec![0.0; k];
    for d in dets {
        for (m, p) in mean.iter_mut().zip(&d.probs) {
            *m += p;
        }
    }
    let n = dets.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn vr_of(dets: &[&Detection]) -> f64 {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for d in dets {
        *counts.entry(d.label).or_default() += 1;
    }
    let modal = counts.values().copied().max().unwrap_or(0);
    1.0 - modal as f64 / dets.len() as f64
}

fn mi_of(dets: &[&Detection]) -> f64 {
    let predictive = entropy(&mean_probs(dets));
    let expected: f64 = dets.iter().map(|d| entropy(&d.probs)).sum::<f64>() / dets.len() as f64;
    (predictive - expected).max(0.0)
}

fn tv_of(dets: &[&Detection]) -> f64 {
    let n = dets.len() as f64;
    (0..4)
        .map(|c| {
            let mean = dets.iter().map(|d| d.bbox.coords()[c]).sum::<f64>() / n;
            dets.iter()
                .map(|d| {
                    let dev = d.bbox.coords()[c] - mean;
                    dev * dev
                })
                .sum::<f64>()
                / n
        })
        .sum()
}

fn ps_of(dets: &[&Detection]) -> f64 {
    (0..4)
        .map(|corner| {
            let pts: Vec<(f64, f64)> = dets.iter().map(|d| d.bbox.corners()[corner]).collect();
            convex_hull_area(&pts)
        })
        .sum()
}

/// 1 − (modal label count / present runs). Ties in the mode do not change the value.
pub fn variation_ratio(track: &ObjectTrack) -> Result<f64, NoPresentRuns> {
    present(track).map(|d| vr_of(&d))
}

/// Entropy of the mean class-probability vector.
pub fn shannon_entropy(track: &ObjectTrack) -> Result<f64, NoPresentRuns> {
    present(track).map(|d| entropy(&mean_probs(&d)))
}

/// Predictive entropy minus the mean per-run entropy, clamped at 0.
pub fn mutual_information(track: &ObjectTrack) -> Result<f64, NoPresentRuns> {
    present(track).map(|d| mi_of(&d))
}

/// Sum over the four coordinates of their population variance.
pub fn total_variance(track: &ObjectTrack) -> Result<f64, NoPresentRuns> {
    present(track).map(|d| tv_of(&d))
}

/// Sum over the four corners of the convex-hull area of that corner's positions.
pub fn prediction_surface(track: &ObjectTrack) -> Result<f64, NoPresentRuns> {
    present(track).map(|d| ps_of(&d))
}

pub fn summarize(track: &ObjectTrack) -> Result<UncertaintySummary, NoPresentRuns> {
    let dets = present(track)?;
    Ok(UncertaintySummary {
        vr: vr_of(&dets),
        se: entropy(&mean_probs(&dets)),
        mi: mi_of(&dets),
        tv: tv_of(&dets),
        ps: ps_of(&dets),
        n_present: dets.len(),
    })
}
