//! Match/Miss/Ghost partitioning between an original output and a mutant output,
//! and cross-run object tracks for the uncertainty metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::iou;
use crate::types::{BBox, Detection, RunOutput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    /// Index into the original output.
    pub original: usize,
    /// Index into the mutant output.
    pub mutant: usize,
    pub iou: f64,
}

/// Partition of one original/mutant output pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub matches: Vec<MatchedPair>,
    pub miss: Vec<usize>,
    pub ghost: Vec<usize>,
}

impl MatchReport {
    pub fn is_identity(&self) -> bool {
        self.miss.is_empty() && self.ghost.is_empty()
    }
}

/// Greedy one-to-one assignment over eligible pairs.
///
/// Pairs are accepted in descending IoU order, ties broken by the lower left
/// index then the lower right index. Returns the accepted pairs sorted by left
/// index, plus the unassigned left and right indices.
pub(crate) fn greedy_assign(
    n_left: usize,
    n_right: usize,
    mut eligible: Vec<MatchedPair>,
) -> (Vec<MatchedPair>, Vec<usize>, Vec<usize>) {
    eligible.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.original.cmp(&b.original))
            .then(a.mutant.cmp(&b.mutant))
    });
    let mut left_used = vec![false; n_left];
    let mut right_used = vec![false; n_right];
    let mut accepted = Vec::new();
    for p in eligible {
        if !left_used[p.original] && !right_used[p.mutant] {
            left_used[p.original] = true;
            right_used[p.mutant] = true;
            accepted.push(p);
        }
    }
    accepted.sort_by_key(|p| p.original);
    let free = |used: Vec<bool>| {
        used.iter()
            .enumerate()
            .filter(|(_, u)| !**u)
            .map(|(i, _)| i)
            .collect::<Vec<_>>()
    };
    (accepted, free(left_used), free(right_used))
}

pub(crate) fn eligible_pairs<A, B>(
    left: &[A],
    right: &[B],
    threshold: f64,
    key_a: impl Fn(&A) -> (BBox, Option<usize>),
    key_b: impl Fn(&B) -> (BBox, Option<usize>),
) -> Vec<MatchedPair> {
    let mut out = Vec::new();
    for (i, a) in left.iter().enumerate() {
        let (ba, la) = key_a(a);
        for (j, b) in right.iter().enumerate() {
            let (bb, lb) = key_b(b);
            if la != lb {
                continue;
            }
            let v = iou(&ba, &bb);
            if v > threshold {
                out.push(MatchedPair {
                    original: i,
                    mutant: j,
                    iou: v,
                });
            }
        }
    }
    out
}

/// Match detections of `original` against `mutant`: IoU strictly above
/// `iou_threshold` and equal labels, assigned greedily one-to-one.
pub fn match_outputs(original: &[Detection], mutant: &[Detection], iou_threshold: f64) -> MatchReport {
    let label = |d: &Detection| (d.bbox, Some(d.label));
    let pairs = eligible_pairs(original, mutant, iou_threshold, label, label);
    let (matches, miss, ghost) = greedy_assign(original.len(), mutant.len(), pairs);
    MatchReport {
        matches,
        miss,
        ghost,
    }
}

/// Same assignment as [`match_outputs`] but without the label clause.
fn associate_by_overlap(reference: &[Detection], run: &[Detection], iou_threshold: f64) -> MatchReport {
    let geom = |d: &Detection| (d.bbox, None);
    let pairs = eligible_pairs(reference, run, iou_threshold, geom, geom);
    let (matches, miss, ghost) = greedy_assign(reference.len(), run.len(), pairs);
    MatchReport {
        matches,
        miss,
        ghost,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackOrigin {
    /// Anchored to the reference detection with this index.
    Reference(usize),
    /// Built from run detections that matched no reference object.
    GhostCluster,
}

/// One object's detections across the `n` runs of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTrack {
    pub reference: Detection,
    /// One slot per run, in run-index order; `None` where the object is absent.
    pub per_run: Vec<Option<Detection>>,
    pub origin: TrackOrigin,
}

impl ObjectTrack {
    pub fn n_runs(&self) -> usize {
        self.per_run.len()
    }

    pub fn n_present(&self) -> usize {
        self.per_run.iter().filter(|d| d.is_some()).count()
    }

    pub fn present(&self) -> impl Iterator<Item = &Detection> {
        self.per_run.iter().flatten()
    }

    pub fn presence_rate(&self) -> f64 {
        if self.per_run.is_empty() {
            return 0.0;
        }
        self.n_present() as f64 / self.per_run.len() as f64
    }

    pub fn is_ghost(&self) -> bool {
        self.origin == TrackOrigin::GhostCluster
    }
}

struct Cluster {
    members: Vec<(usize, Detection)>,
    centroid: BBox,
}

impl Cluster {
    fn has_run(&self, run: usize) -> bool {
        self.members.iter().any(|(r, _)| *r == run)
    }

    fn into_track(self, n_runs: usize) -> ObjectTrack {
        let mut per_run = vec![None; n_runs];
        let mut votes: std::collections::BTreeMap<usize, usize> = Default::default();
        let k = self.members.iter().map(|(_, d)| d.probs.len()).max().unwrap_or(1);
        let mut probs = vec![0.0; k];
        let mut score = 0.0;
        for (_, d) in &self.members {
            *votes.entry(d.label).or_default() += 1;
            for (p, q) in probs.iter_mut().zip(&d.probs) {
                *p += q;
            }
            score += d.score;
        }
        let m = self.members.len() as f64;
        probs.iter_mut().for_each(|p| *p /= m);
        // majority label, ties to the smallest label
        let label = votes
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(l, _)| *l)
            .unwrap_or(0);
        for (run, d) in self.members {
            per_run[run] = Some(d);
        }
        ObjectTrack {
            reference: Detection {
                bbox: self.centroid,
                label,
                score: score / m,
                probs,
            },
            per_run,
            origin: TrackOrigin::GhostCluster,
        }
    }
}

/// Build one track per reference detection across `runs`, followed by
/// ghost-cluster tracks for run detections that matched no reference object.
///
/// `runs` must share one model id and the reference's image id; they are
/// placed into slots in ascending run-index order. Association uses IoU only,
/// so label flips stay inside the track.
pub fn build_tracks(
    reference: &RunOutput,
    runs: &[RunOutput],
    iou_threshold: f64,
) -> Result<Vec<ObjectTrack>> {
    if let Some(first) = runs.first() {
        for r in runs {
            if r.model_id != first.model_id {
                return Err(Error::InconsistentRuns(format!(
                    "mixed model ids {:?} and {:?}",
                    first.model_id, r.model_id
                )));
            }
            if r.image_id != reference.image_id {
                return Err(Error::InconsistentRuns(format!(
                    "run of image {:?} tracked against reference image {:?}",
                    r.image_id, reference.image_id
                )));
            }
        }
    }
    let mut ordered: Vec<&RunOutput> = runs.iter().collect();
    ordered.sort_by_key(|r| r.run);
    let n = ordered.len();

    let mut tracks: Vec<ObjectTrack> = reference
        .detections
        .iter()
        .enumerate()
        .map(|(i, d)| ObjectTrack {
            reference: d.clone(),
            per_run: vec![None; n],
            origin: TrackOrigin::Reference(i),
        })
        .collect();

    let mut leftovers: Vec<(usize, Detection)> = Vec::new();
    for (slot, run) in ordered.iter().enumerate() {
        let report = associate_by_overlap(&reference.detections, &run.detections, iou_threshold);
        for p in &report.matches {
            tracks[p.original].per_run[slot] = Some(run.detections[p.mutant].clone());
        }
        leftovers.extend(report.ghost.iter().map(|&j| (slot, run.detections[j].clone())));
    }

    let mut clusters: Vec<Cluster> = Vec::new();
    for (slot, det) in leftovers {
        let mut best: Option<(usize, f64)> = None;
        for (ci, c) in clusters.iter().enumerate() {
            if c.has_run(slot) {
                continue;
            }
            let v = iou(&c.centroid, &det.bbox);
            if v > iou_threshold && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((ci, v));
            }
        }
        match best {
            Some((ci, _)) => {
                let c = &mut clusters[ci];
                c.members.push((slot, det));
                c.centroid = BBox::centroid(c.members.iter().map(|(_, d)| &d.bbox))
                    .expect("cluster is non-empty");
            }
            None => clusters.push(Cluster {
                centroid: det.bbox,
                members: vec![(slot, det)],
            }),
        }
    }
    tracks.extend(clusters.into_iter().map(|c| c.into_track(n)));
    Ok(tracks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectSet {
    Match,
    Miss,
    Ghost,
}

impl ObjectSet {
    pub const ALL: [ObjectSet; 3] = [ObjectSet::Match, ObjectSet::Miss, ObjectSet::Ghost];

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectSet::Match => "match",
            ObjectSet::Miss => "miss",
            ObjectSet::Ghost => "ghost",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackAssignment {
    /// Index of the track in the slice passed to [`classify_tracks`].
    pub track: usize,
    pub set: ObjectSet,
    pub presence_rate: f64,
}

/// Reference-anchored tracks missing in at least `miss_threshold` of the runs
/// are MISS, the rest MATCH; ghost clusters are GHOST.
pub fn classify_tracks(tracks: &[ObjectTrack], miss_threshold: f64) -> Vec<TrackAssignment> {
    tracks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let presence_rate = t.presence_rate();
            let set = match t.origin {
                TrackOrigin::GhostCluster => ObjectSet::Ghost,
                TrackOrigin::Reference(_) if 1.0 - presence_rate >= miss_threshold => ObjectSet::Miss,
                TrackOrigin::Reference(_) => ObjectSet::Match,
            };
            TrackAssignment {
                track: i,
                set,
                presence_rate,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x1: f64, y1: f64, x2: f64, y2: f64, label: usize) -> Detection {
        let mut probs = vec![0.0; 3];
        probs[label] = 1.0;
        Detection::new(BBox::new(x1, y1, x2, y2).unwrap(), label, 0.9, probs).unwrap()
    }

    fn run(model: &str, r: u32, dets: Vec<Detection>) -> RunOutput {
        RunOutput {
            model_id: model.into(),
            image_id: "img".into(),
            run: r,
            detections: dets,
        }
    }

    #[test]
    fn empty_outputs() {
        let r = match_outputs(&[], &[], 0.5);
        assert_eq!(r, MatchReport::default());
    }

    #[test]
    fn identical_single_detection() {
        let a = det(0.0, 0.0, 10.0, 10.0, 1);
        let r = match_outputs(std::slice::from_ref(&a), std::slice::from_ref(&a), 0.5);
        assert_eq!(r.matches.len(), 1);
        assert_eq!(r.matches[0].iou, 1.0);
        assert!(r.miss.is_empty() && r.ghost.is_empty());
    }

    #[test]
    fn greedy_prefers_higher_overlap() {
        // A = [0,0,10,10]; B1 shifted so IoU = 0.9, B2 so IoU = 0.6
        let a = det(0.0, 0.0, 10.0, 10.0, 0);
        // width-only overlap: IoU = (10 - s) / (10 + s)
        let s1 = 10.0 * (1.0 - 0.9) / (1.0 + 0.9);
        let s2 = 10.0 * (1.0 - 0.6) / (1.0 + 0.6);
        let b1 = det(s1, 0.0, 10.0 + s1, 10.0, 0);
        let b2 = det(s2, 0.0, 10.0 + s2, 10.0, 0);
        assert!((iou(&a.bbox, &b1.bbox) - 0.9).abs() < 1e-12);
        assert!((iou(&a.bbox, &b2.bbox) - 0.6).abs() < 1e-12);
        // list the weaker candidate first so order alone cannot explain the result
        let r = match_outputs(&[a], &[b2, b1], 0.5);
        assert_eq!(r.matches.len(), 1);
        assert_eq!(r.matches[0].mutant, 1);
        assert_eq!(r.ghost, vec![0]);
        assert!(r.miss.is_empty());
    }

    #[test]
    fn label_mismatch_is_miss_and_ghost() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0);
        let b = det(0.5, 0.0, 10.5, 10.0, 1);
        let r = match_outputs(&[a], &[b], 0.5);
        assert!(r.matches.is_empty());
        assert_eq!(r.miss, vec![0]);
        assert_eq!(r.ghost, vec![0]);
    }

    #[test]
    fn iou_must_strictly_exceed_threshold() {
        // IoU exactly 0.5: shift s with (10 - s) / (10 + s) = 0.5
        let a = det(0.0, 0.0, 10.0, 10.0, 0);
        let b = det(10.0 / 3.0, 0.0, 10.0 + 10.0 / 3.0, 10.0, 0);
        let v = iou(&a.bbox, &b.bbox);
        let r = match_outputs(&[a], &[b], v);
        assert!(r.matches.is_empty());
    }

    #[test]
    fn tie_break_is_by_index() {
        let a0 = det(0.0, 0.0, 10.0, 10.0, 0);
        let a1 = det(0.0, 0.0, 10.0, 10.0, 0);
        let b0 = det(0.0, 0.0, 10.0, 10.0, 0);
        let r = match_outputs(&[a0, a1], &[b0], 0.5);
        assert_eq!(r.matches[0].original, 0);
        assert_eq!(r.miss, vec![1]);
    }

    #[test]
    fn tracks_of_identical_runs() {
        let dets = vec![det(0.0, 0.0, 10.0, 10.0, 0), det(20.0, 20.0, 30.0, 35.0, 2)];
        let reference = run("original", 0, dets.clone());
        let runs: Vec<_> = (0..3).map(|r| run("mcd:0.10", r, dets.clone())).collect();
        let tracks = build_tracks(&reference, &runs, 0.5).unwrap();
        assert_eq!(tracks.len(), 2);
        for (i, t) in tracks.iter().enumerate() {
            assert_eq!(t.origin, TrackOrigin::Reference(i));
            assert_eq!(t.presence_rate(), 1.0);
        }
    }

    #[test]
    fn absent_slot_is_none() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0);
        let reference = run("original", 0, vec![a.clone()]);
        // run order in the slice must not matter
        let runs = vec![
            run("m", 2, vec![a.clone()]),
            run("m", 0, vec![a.clone()]),
            run("m", 1, vec![]),
        ];
        let tracks = build_tracks(&reference, &runs, 0.5).unwrap();
        assert_eq!(tracks[0].per_run, vec![Some(a.clone()), None, Some(a)]);
    }

    #[test]
    fn label_flip_stays_in_track() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0);
        let flipped = det(0.0, 0.0, 10.0, 10.0, 1);
        let reference = run("original", 0, vec![a.clone()]);
        let runs = vec![run("m", 0, vec![a]), run("m", 1, vec![flipped])];
        let tracks = build_tracks(&reference, &runs, 0.5).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].n_present(), 2);
    }

    #[test]
    fn spurious_detection_forms_one_ghost_cluster() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0);
        let g = det(50.0, 50.0, 60.0, 60.0, 1);
        let reference = run("original", 0, vec![a.clone()]);
        let runs: Vec<_> = (0..3).map(|r| run("m", r, vec![a.clone(), g.clone()])).collect();
        let tracks = build_tracks(&reference, &runs, 0.5).unwrap();
        assert_eq!(tracks.len(), 2);
        assert!(tracks[1].is_ghost());
        assert_eq!(tracks[1].presence_rate(), 1.0);
        assert_eq!(tracks[1].reference.bbox, g.bbox);
        assert_eq!(tracks[1].reference.label, 1);
    }

    #[test]
    fn ghost_cluster_takes_one_member_per_run() {
        let g1 = det(50.0, 50.0, 60.0, 60.0, 1);
        let g2 = det(50.5, 50.0, 60.5, 60.0, 2);
        let reference = run("original", 0, vec![]);
        let g3 = det(50.0, 50.0, 61.0, 60.0, 2);
        let runs = vec![run("m", 0, vec![g1, g2]), run("m", 1, vec![g3])];
        let tracks = build_tracks(&reference, &runs, 0.5).unwrap();
        // both run-0 ghosts overlap, but cannot share a cluster
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].n_present(), 2);
        assert_eq!(tracks[1].n_present(), 1);
        // centroid of g1 and g3
        assert_eq!(tracks[0].reference.bbox.x2, 60.5);
        // 1-1 label tie goes to the smaller label
        assert_eq!(tracks[0].reference.label, 1);
    }

    #[test]
    fn inconsistent_runs_rejected() {
        let reference = run("original", 0, vec![]);
        let runs = vec![run("a", 0, vec![]), run("b", 1, vec![])];
        assert!(build_tracks(&reference, &runs, 0.5).is_err());
        let mut other = run("a", 1, vec![]);
        other.image_id = "elsewhere".into();
        assert!(build_tracks(&reference, &[run("a", 0, vec![]), other], 0.5).is_err());
    }

    #[test]
    fn classification_thresholds() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0);
        let make = |present: usize, n: usize| ObjectTrack {
            reference: a.clone(),
            per_run: (0..n).map(|i| (i < present).then(|| a.clone())).collect(),
            origin: TrackOrigin::Reference(0),
        };
        let tracks = vec![make(10, 10), make(0, 10), make(4, 10), make(5, 10)];
        let sets: Vec<_> = classify_tracks(&tracks, 0.5).iter().map(|t| t.set).collect();
        assert_eq!(sets, vec![ObjectSet::Match, ObjectSet::Miss, ObjectSet::Miss, ObjectSet::Miss]);
        let ghost = ObjectTrack {
            origin: TrackOrigin::GhostCluster,
            ..make(1, 10)
        };
        assert_eq!(classify_tracks(&[ghost], 0.5)[0].set, ObjectSet::Ghost);
    }
}
