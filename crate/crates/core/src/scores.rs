//! The 22 mutation scores and their per-suite aggregation.
//!
//! * image level (3): a mutant is killed under a criterion when some image shows
//!   a non-empty Miss/Ghost/Miss∪Ghost set in significantly many of the n runs
//!   (one-sided binomial test against `binomial_null_p`);
//! * object level (3): Miss/Ghost proportions with counts summed over images and runs;
//! * IoU (1): mean `1 − IoU` over matched pairs;
//! * uncertainty-aware (15): `|UM_orig − UM_mut|` averaged over the objects of
//!   each set, for VR, SE, MI, TV and PS.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::matching::{MatchReport, ObjectSet, ObjectTrack, TrackAssignment, TrackOrigin};
use crate::stats::{binomial_tail_greater, StatsError};
use crate::types::AnalysisConfig;
use crate::uncertainty::{summarize, Metric, UncertaintySummary};

/// Which failure set an image-level or object-level score looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Miss,
    Ghost,
    Mg,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Miss, Criterion::Ghost, Criterion::Mg];

    /// Whether this criterion's set is non-empty for one original/mutant pair.
    pub fn fires(&self, report: &MatchReport) -> bool {
        match self {
            Criterion::Miss => !report.miss.is_empty(),
            Criterion::Ghost => !report.ghost.is_empty(),
            Criterion::Mg => !report.miss.is_empty() || !report.ghost.is_empty(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScoreKey {
    Img(Criterion),
    Obj(Criterion),
    Iou,
    Ua(Metric, ObjectSet),
}

const KEY_NAMES: [&str; 22] = [
    "img_ms_miss",
    "img_ms_ghost",
    "img_ms_mg",
    "obj_ms_miss",
    "obj_ms_ghost",
    "obj_ms_mg",
    "iou_ms",
    "ua_vr_match",
    "ua_se_match",
    "ua_mi_match",
    "ua_tv_match",
    "ua_ps_match",
    "ua_vr_miss",
    "ua_se_miss",
    "ua_mi_miss",
    "ua_tv_miss",
    "ua_ps_miss",
    "ua_vr_ghost",
    "ua_se_ghost",
    "ua_mi_ghost",
    "ua_tv_ghost",
    "ua_ps_ghost",
];

impl ScoreKey {
    pub const COUNT: usize = 22;

    /// Every key in report order.
    pub fn all() -> impl Iterator<Item = ScoreKey> {
        (0..Self::COUNT).map(ScoreKey::from_index)
    }

    pub fn index(&self) -> usize {
        let crit = |c: &Criterion| *c as usize;
        match self {
            ScoreKey::Img(c) => crit(c),
            ScoreKey::Obj(c) => 3 + crit(c),
            ScoreKey::Iou => 6,
            ScoreKey::Ua(m, s) => 7 + 5 * (*s as usize) + (*m as usize),
        }
    }

    fn from_index(i: usize) -> ScoreKey {
        match i {
            0..=2 => ScoreKey::Img(Criterion::ALL[i]),
            3..=5 => ScoreKey::Obj(Criterion::ALL[i - 3]),
            6 => ScoreKey::Iou,
            7..=21 => ScoreKey::Ua(Metric::ALL[(i - 7) % 5], ObjectSet::ALL[(i - 7) / 5]),
            _ => panic!("score index {i} out of range"),
        }
    }

    pub fn name(&self) -> &'static str {
        KEY_NAMES[self.index()]
    }

    pub fn from_name(name: &str) -> Option<ScoreKey> {
        KEY_NAMES.iter().position(|k| *k == name).map(ScoreKey::from_index)
    }
}

impl fmt::Display for ScoreKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per score key; `None` is ABSENT (no evidence) and serializes as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScoreValues([Option<f64>; ScoreKey::COUNT]);

impl ScoreValues {
    pub fn get(&self, key: ScoreKey) -> Option<f64> {
        self.0[key.index()]
    }

    pub fn set(&mut self, key: ScoreKey, value: Option<f64>) {
        self.0[key.index()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (ScoreKey, Option<f64>)> + '_ {
        ScoreKey::all().map(|k| (k, self.get(k)))
    }
}

impl Serialize for ScoreValues {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(ScoreKey::COUNT))?;
        for (k, v) in self.iter() {
            map.serialize_entry(k.name(), &v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ScoreValues {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw: BTreeMap<String, Option<f64>> = BTreeMap::deserialize(deserializer)?;
        let mut out = ScoreValues::default();
        for (name, v) in raw {
            let key = ScoreKey::from_name(&name)
                .ok_or_else(|| de::Error::custom(format!("unknown score key {name:?}")))?;
            out.set(key, v);
        }
        Ok(out)
    }
}

/// Scores of one mutant over one test suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub mutant: String,
    pub suite: String,
    pub scores: ScoreValues,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectCounts {
    pub matched: usize,
    pub missed: usize,
    pub ghosts: usize,
}

impl ObjectCounts {
    pub fn add(&mut self, report: &MatchReport) {
        self.matched += report.matches.len();
        self.missed += report.miss.len();
        self.ghosts += report.ghost.len();
    }

    pub fn merge(&mut self, other: &ObjectCounts) {
        self.matched += other.matched;
        self.missed += other.missed;
        self.ghosts += other.ghosts;
    }

    /// `(miss, ghost, mg)` object-level scores; all zero when there are no objects.
    pub fn scores(&self) -> [f64; 3] {
        let (m, x, g) = (
            self.matched as f64,
            self.missed as f64,
            self.ghosts as f64,
        );
        let total = x + m + g;
        if total == 0.0 {
            return [0.0; 3];
        }
        let miss = if x + m > 0.0 { x / (x + m) } else { 0.0 };
        [miss, g / total, (x + g) / total]
    }
}

/// `(obj_ms_miss, obj_ms_ghost, obj_ms_mg)` with counts summed over all reports.
pub fn obj_ms<'a>(reports: impl IntoIterator<Item = &'a MatchReport>) -> [f64; 3] {
    let mut counts = ObjectCounts::default();
    for r in reports {
        counts.add(r);
    }
    counts.scores()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IouAccumulator {
    sum: f64,
    pairs: usize,
}

impl IouAccumulator {
    pub fn add(&mut self, report: &MatchReport) {
        for p in &report.matches {
            self.sum += 1.0 - p.iou;
            self.pairs += 1;
        }
    }

    pub fn merge(&mut self, other: &IouAccumulator) {
        self.sum += other.sum;
        self.pairs += other.pairs;
    }

    pub fn value(&self) -> Option<f64> {
        (self.pairs > 0).then(|| (self.sum / self.pairs as f64).clamp(0.0, 1.0))
    }
}

/// Mean `1 − IoU` over all matched pairs; `None` when nothing matched.
pub fn iou_ms<'a>(reports: impl IntoIterator<Item = &'a MatchReport>) -> Option<f64> {
    let mut acc = IouAccumulator::default();
    for r in reports {
        acc.add(r);
    }
    acc.value()
}

/// One-sided binomial p-value for the number of runs whose set was non-empty.
pub fn kill_test(flags: &[bool], null_p: f64) -> Result<f64, StatsError> {
    let k = flags.iter().filter(|f| **f).count() as u64;
    binomial_tail_greater(k, flags.len() as u64, null_p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KillVerdict {
    pub mutant: String,
    pub criterion: Criterion,
    pub killed: bool,
    /// Image with the smallest p-value, reported when killed.
    pub witness: Option<String>,
    pub min_p_value: f64,
}

/// The per-run reports of one mutant on one image.
#[derive(Debug, Clone, Copy)]
pub struct ImageReports<'a> {
    pub image_id: &'a str,
    pub reports: &'a [MatchReport],
}

/// Kill verdicts of one mutant under each criterion.
pub fn kill_verdicts(
    mutant: &str,
    images: &[ImageReports<'_>],
    cfg: &AnalysisConfig,
) -> Result<[KillVerdict; 3], StatsError> {
    let verdict = |criterion: Criterion| -> Result<KillVerdict, StatsError> {
        let mut best: Option<(f64, &str)> = None;
        for img in images {
            let flags: Vec<bool> = img.reports.iter().map(|r| criterion.fires(r)).collect();
            let p = kill_test(&flags, cfg.binomial_null_p)?;
            if best.is_none_or(|(bp, _)| p < bp) {
                best = Some((p, img.image_id));
            }
        }
        let (min_p, image) = best.unwrap_or((1.0, ""));
        let killed = min_p < cfg.alpha;
        Ok(KillVerdict {
            mutant: mutant.to_string(),
            criterion,
            killed,
            witness: killed.then(|| image.to_string()),
            min_p_value: min_p,
        })
    };
    Ok([
        verdict(Criterion::Miss)?,
        verdict(Criterion::Ghost)?,
        verdict(Criterion::Mg)?,
    ])
}

/// Fraction of mutants killed under each criterion, `[miss, ghost, mg]`.
pub fn img_ms(verdicts: &[[KillVerdict; 3]]) -> [f64; 3] {
    if verdicts.is_empty() {
        return [0.0; 3];
    }
    let n = verdicts.len() as f64;
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        *o = verdicts.iter().filter(|v| v[i].killed).count() as f64 / n;
    }
    out
}

fn binary_entropy(p: f64) -> f64 {
    let h = |q: f64| if q > 0.0 { -q * q.ln() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// Running sums behind the 15 uncertainty-aware scores.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UaAccumulator {
    sums: [[f64; 5]; 3],
    counts: [usize; 3],
}

impl UaAccumulator {
    fn push(&mut self, set: ObjectSet, values: [f64; 5]) {
        let s = set as usize;
        for (acc, v) in self.sums[s].iter_mut().zip(values) {
            *acc += v;
        }
        self.counts[s] += 1;
    }

    /// Add the objects of one image.
    ///
    /// `original` and `mutant` tracks must be built against the same reference
    /// output; `assignments` classifies the `mutant` tracks.
    pub fn add_image(
        &mut self,
        original: &[ObjectTrack],
        mutant: &[ObjectTrack],
        assignments: &[TrackAssignment],
    ) {
        let orig_by_anchor: BTreeMap<usize, Option<UncertaintySummary>> = original
            .iter()
            .filter_map(|t| match t.origin {
                TrackOrigin::Reference(i) => Some((i, summarize(t).ok())),
                TrackOrigin::GhostCluster => None,
            })
            .collect();

        for a in assignments {
            let track = &mutant[a.track];
            match a.set {
                ObjectSet::Match => {
                    let TrackOrigin::Reference(anchor) = track.origin else {
                        continue;
                    };
                    let (Some(Some(orig)), Ok(mutated)) =
                        (orig_by_anchor.get(&anchor), summarize(track))
                    else {
                        continue;
                    };
                    let values = Metric::ALL.map(|m| (orig.get(m) - mutated.get(m)).abs());
                    self.push(ObjectSet::Match, values);
                }
                ObjectSet::Miss => {
                    let miss_fraction = 1.0 - a.presence_rate;
                    let se = binary_entropy(a.presence_rate);
                    self.push(
                        ObjectSet::Miss,
                        [miss_fraction, se, miss_fraction, miss_fraction, miss_fraction],
                    );
                }
                ObjectSet::Ghost => {
                    // no original counterpart, so UM_orig is 0
                    if let Ok(s) = summarize(track) {
                        self.push(ObjectSet::Ghost, Metric::ALL.map(|m| s.get(m)));
                    }
                }
            }
        }
    }

    pub fn merge(&mut self, other: &UaAccumulator) {
        for s in 0..3 {
            for m in 0..5 {
                self.sums[s][m] += other.sums[s][m];
            }
            self.counts[s] += other.counts[s];
        }
    }

    pub fn count(&self, set: ObjectSet) -> usize {
        self.counts[set as usize]
    }

    pub fn value(&self, metric: Metric, set: ObjectSet) -> Option<f64> {
        let s = set as usize;
        (self.counts[s] > 0).then(|| self.sums[s][metric as usize] / self.counts[s] as f64)
    }
}

/// Uncertainty-aware scores for one image, keyed by (metric, set).
pub fn ua_ms(
    original: &[ObjectTrack],
    mutant: &[ObjectTrack],
    assignments: &[TrackAssignment],
) -> BTreeMap<(Metric, ObjectSet), Option<f64>> {
    let mut acc = UaAccumulator::default();
    acc.add_image(original, mutant, assignments);
    let mut out = BTreeMap::new();
    for set in ObjectSet::ALL {
        for metric in Metric::ALL {
            out.insert((metric, set), acc.value(metric, set));
        }
    }
    out
}

/// Everything needed to fill one [`ScoreTable`].
#[derive(Debug, Clone, Default)]
pub struct ScoreInputs {
    pub counts: ObjectCounts,
    pub iou: IouAccumulator,
    pub ua: UaAccumulator,
}

impl ScoreInputs {
    pub fn merge(&mut self, other: &ScoreInputs) {
        self.counts.merge(&other.counts);
        self.iou.merge(&other.iou);
        self.ua.merge(&other.ua);
    }

    pub fn into_table(self, mutant: &str, suite: &str, kills: &[KillVerdict; 3]) -> ScoreTable {
        let mut scores = ScoreValues::default();
        for (i, c) in Criterion::ALL.iter().enumerate() {
            scores.set(ScoreKey::Img(*c), Some(if kills[i].killed { 1.0 } else { 0.0 }));
        }
        for (c, v) in Criterion::ALL.iter().zip(self.counts.scores()) {
            scores.set(ScoreKey::Obj(*c), Some(v));
        }
        scores.set(ScoreKey::Iou, self.iou.value());
        for set in ObjectSet::ALL {
            for metric in Metric::ALL {
                scores.set(ScoreKey::Ua(metric, set), self.ua.value(metric, set));
            }
        }
        ScoreTable {
            mutant: mutant.to_string(),
            suite: suite.to_string(),
            scores,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub suite: String,
    pub mutants: usize,
    pub means: ScoreValues,
}

/// Unweighted mean of each score over the tables, skipping ABSENT values.
///
/// Image-level entries of a table are 0/1 kill indicators, so their mean is
/// the killed fraction of mutants.
pub fn aggregate(suite: &str, tables: &[ScoreTable]) -> SuiteSummary {
    let mut means = ScoreValues::default();
    for key in ScoreKey::all() {
        let present: Vec<f64> = tables.iter().filter_map(|t| t.scores.get(key)).collect();
        if !present.is_empty() {
            means.set(key, Some(present.iter().sum::<f64>() / present.len() as f64));
        }
    }
    SuiteSummary {
        suite: suite.to_string(),
        mutants: tables.len(),
        means,
    }
}
