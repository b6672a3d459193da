//! Seeded synthetic detector standing in for a real model and its MCD/MCB mutants.
//!
//! The original model detects every ground-truth object with its exact box and
//! a probability vector holding 0.9 on the true class, identically in every
//! run. A mutant perturbs that output per run according to [`EffectParams`]:
//! dropped detections, jittered boxes, flipped labels, flattened probabilities
//! and spurious ghost boxes. Effect strength grows with the mutation ratios
//! through [`effect_curve`].
//!
//! Every random draw comes from a ChaCha stream keyed by
//! `(seed, model_id, image_id, run)`, so any single run can be regenerated in
//! isolation and generation order does not matter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::types::{
    BBox, Detection, GroundTruth, GroundTruthObject, ModelId, MutationConfig, Operator, RunOutput,
    ORIGINAL_MODEL_ID,
};

/// Probability mass the original model puts on the true class.
pub const TRUE_CLASS_MASS: f64 = 0.9;

/// Ghost boxes are squares with this fraction of the image diagonal as side.
pub const GHOST_SIZE_FRACTION: f64 = 0.05;

/// Deterministic RNG for one (seed, model, image, run) cell.
pub fn stream_rng(seed: u64, model_id: &str, image_id: &str, run: u32) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for part in [model_id, image_id] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    h.update(run.to_le_bytes());
    let key: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub n_images: usize,
    /// Inclusive range of ground-truth objects per image.
    pub objects_per_image: (usize, usize),
    pub width: f64,
    pub height: f64,
    pub num_classes: usize,
    /// Inclusive range of object side lengths, in pixels.
    pub object_size: (f64, f64),
    /// Prefix of generated image ids, e.g. `"img"` gives `img_0000`.
    pub image_prefix: String,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_images: 100,
            objects_per_image: (1, 5),
            width: 640.0,
            height: 480.0,
            num_classes: 5,
            object_size: (32.0, 128.0),
            image_prefix: "img".into(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneImage {
    pub image_id: String,
    pub objects: Vec<GroundTruthObject>,
    /// The original model's output, shared by all of its runs.
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub images: Vec<SceneImage>,
}

impl Scene {
    pub fn ground_truth(&self) -> Vec<GroundTruth> {
        self.images
            .iter()
            .map(|img| GroundTruth {
                image_id: img.image_id.clone(),
                objects: img.objects.clone(),
            })
            .collect()
    }

    /// `n_runs` identical runs of the original model per image, image-major.
    pub fn original_runs(&self, n_runs: u32) -> Vec<RunOutput> {
        self.images
            .iter()
            .flat_map(|img| {
                (0..n_runs).map(move |run| RunOutput {
                    model_id: ORIGINAL_MODEL_ID.into(),
                    image_id: img.image_id.clone(),
                    run,
                    detections: img.detections.clone(),
                })
            })
            .collect()
    }
}

/// Probability vector with `TRUE_CLASS_MASS` on `label`, the rest spread evenly.
pub fn concentrated_probs(label: usize, num_classes: usize) -> Vec<f64> {
    if num_classes == 1 {
        return vec![1.0];
    }
    let rest = (1.0 - TRUE_CLASS_MASS) / (num_classes - 1) as f64;
    let mut p = vec![rest; num_classes];
    p[label] = TRUE_CLASS_MASS;
    p
}

pub fn simulate_scene(spec: &SceneSpec) -> Scene {
    let (lo, hi) = spec.objects_per_image;
    assert!(lo <= hi, "objects_per_image range is inverted");
    assert!(spec.num_classes >= 1, "need at least one class");
    let (smin, smax) = spec.object_size;
    assert!(
        smin > 0.0 && smin <= smax && smax < spec.width && smax < spec.height,
        "object sizes must fit the image"
    );

    let images = (0..spec.n_images)
        .map(|i| {
            let image_id = format!("{}_{:04}", spec.image_prefix, i);
            let mut rng = stream_rng(spec.seed, "scene", &image_id, 0);
            let count = rng.random_range(lo..=hi);
            let mut objects = Vec::with_capacity(count);
            let mut detections = Vec::with_capacity(count);
            for _ in 0..count {
                let w = rng.random_range(smin..=smax);
                let h = rng.random_range(smin..=smax);
                let x1 = rng.random_range(0.0..spec.width - w);
                let y1 = rng.random_range(0.0..spec.height - h);
                let bbox = BBox::new(x1, y1, x1 + w, y1 + h).expect("generated box is valid");
                let label = rng.random_range(0..spec.num_classes);
                let score = rng.random_range(0.6..0.99);
                objects.push(GroundTruthObject { bbox, label });
                detections.push(
                    Detection::new(bbox, label, score, concentrated_probs(label, spec.num_classes))
                        .expect("generated detection is valid"),
                );
            }
            SceneImage {
                image_id,
                objects,
                detections,
            }
        })
        .collect();
    Scene {
        spec: spec.clone(),
        images,
    }
}

/// Behavioral effect of a mutant on the simulated detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectParams {
    /// Per-object drop probability in a one-object image.
    pub p_miss: f64,
    /// Expected ghost detections per image per run.
    pub ghost_rate: f64,
    /// Standard deviation of per-coordinate box noise, pixels.
    pub jitter_sigma: f64,
    pub label_flip: f64,
    /// Softmax temperature applied to probability vectors (1 = unchanged).
    pub prob_temperature: f64,
    /// Crowded images lose more objects: the survival probability `1 − p_miss`
    /// is raised to `1 + crowding_gain · ln(objects in image)`.
    pub crowding_gain: f64,
}

impl EffectParams {
    pub fn none() -> Self {
        Self {
            p_miss: 0.0,
            ghost_rate: 0.0,
            jitter_sigma: 0.0,
            label_flip: 0.0,
            prob_temperature: 1.0,
            crowding_gain: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.p_miss == 0.0
            && self.ghost_rate == 0.0
            && self.jitter_sigma == 0.0
            && self.label_flip == 0.0
            && self.prob_temperature == 1.0
    }

    fn miss_probability(&self, objects_in_image: usize) -> f64 {
        if self.p_miss == 0.0 {
            return 0.0;
        }
        let exponent = 1.0 + self.crowding_gain * (objects_in_image.max(1) as f64).ln();
        1.0 - (1.0 - self.p_miss).powf(exponent)
    }
}

/// Coefficients of the saturating effect curves `cap · (1 − e^(−slope · drive))`.
///
/// The drive is `μ_d` for MCD and `μ_d · (1 + block_gain · ln(μ_b + 1))` for MCB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectCoefficients {
    pub miss_cap: f64,
    pub miss_slope: f64,
    pub ghost_cap: f64,
    pub ghost_slope: f64,
    pub jitter_cap: f64,
    pub jitter_slope: f64,
    pub flip_cap: f64,
    pub flip_slope: f64,
    /// Temperature is `1 + temperature_cap · (1 − e^(−temperature_slope · drive))`.
    pub temperature_cap: f64,
    pub temperature_slope: f64,
    pub block_gain: f64,
    pub crowding_gain: f64,
}

impl Default for EffectCoefficients {
    fn default() -> Self {
        Self {
            miss_cap: 0.35,
            miss_slope: 2.5,
            ghost_cap: 1.0,
            ghost_slope: 2.0,
            jitter_cap: 12.0,
            jitter_slope: 2.0,
            flip_cap: 0.3,
            flip_slope: 2.0,
            temperature_cap: 3.0,
            temperature_slope: 2.0,
            block_gain: 0.5,
            crowding_gain: 1.5,
        }
    }
}

fn drive(cfg: &MutationConfig, coeffs: &EffectCoefficients) -> f64 {
    let d = cfg.dropout_rate;
    match (cfg.operator, cfg.block_size) {
        (Operator::Mcb, Some(b)) => d + coeffs.block_gain * d * (b as f64 + 1.0).ln(),
        _ => d,
    }
}

/// Map a model to its simulated effects. The original model has none.
pub fn effect_curve(model: &ModelId, coeffs: &EffectCoefficients) -> EffectParams {
    let ModelId::Mutant(cfg) = model else {
        return EffectParams::none();
    };
    let s = drive(cfg, coeffs);
    let sat = |cap: f64, slope: f64| cap * (1.0 - (-slope * s).exp());
    EffectParams {
        p_miss: sat(coeffs.miss_cap, coeffs.miss_slope),
        ghost_rate: sat(coeffs.ghost_cap, coeffs.ghost_slope),
        jitter_sigma: sat(coeffs.jitter_cap, coeffs.jitter_slope),
        label_flip: sat(coeffs.flip_cap, coeffs.flip_slope),
        prob_temperature: 1.0 + sat(coeffs.temperature_cap, coeffs.temperature_slope),
        crowding_gain: coeffs.crowding_gain,
    }
}

fn flatten_probs(probs: &mut [f64], temperature: f64) {
    if temperature == 1.0 {
        return;
    }
    let inv = 1.0 / temperature;
    probs.iter_mut().for_each(|p| *p = p.powf(inv));
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
}

/// Clamp a jittered interval into `[0, extent]` keeping at least one pixel of width.
fn clip_interval(a: f64, b: f64, extent: f64) -> (f64, f64) {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let (lo, hi) = (lo.clamp(0.0, extent), hi.clamp(0.0, extent));
    if hi - lo >= 1.0 {
        return (lo, hi);
    }
    let c = ((lo + hi) / 2.0).clamp(0.5, extent - 0.5);
    (c - 0.5, c + 0.5)
}

fn perturb(
    det: &Detection,
    effects: &EffectParams,
    spec: &SceneSpec,
    noise: Option<&Normal<f64>>,
    rng: &mut ChaCha8Rng,
) -> Detection {
    let mut out = det.clone();
    if let Some(noise) = noise {
        let c = det.bbox.coords();
        let j: Vec<f64> = c.iter().map(|v| v + noise.sample(rng)).collect();
        let (x1, x2) = clip_interval(j[0], j[2], spec.width);
        let (y1, y2) = clip_interval(j[1], j[3], spec.height);
        out.bbox = BBox::new(x1, y1, x2, y2).expect("clipped box is valid");
    }
    if effects.label_flip > 0.0 && spec.num_classes > 1 && rng.random::<f64>() < effects.label_flip {
        let shift = rng.random_range(1..spec.num_classes);
        out.label = (det.label + shift) % spec.num_classes;
        out.probs = concentrated_probs(out.label, spec.num_classes);
    }
    flatten_probs(&mut out.probs, effects.prob_temperature);
    out
}

fn ghost(effects: &EffectParams, spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Detection {
    let side = GHOST_SIZE_FRACTION * spec.width.hypot(spec.height);
    let x1 = rng.random_range(0.0..spec.width - side);
    let y1 = rng.random_range(0.0..spec.height - side);
    let label = rng.random_range(0..spec.num_classes);
    let mut probs = concentrated_probs(label, spec.num_classes);
    flatten_probs(&mut probs, effects.prob_temperature);
    let score = rng.random_range(0.5..0.9);
    Detection::new(
        BBox::new(x1, y1, x1 + side, y1 + side).expect("ghost box is valid"),
        label,
        score,
        probs,
    )
    .expect("ghost detection is valid")
}

/// One run of a mutant on one image.
pub fn simulate_run(
    image: &SceneImage,
    spec: &SceneSpec,
    model_id: &str,
    effects: &EffectParams,
    run: u32,
    seed: u64,
) -> RunOutput {
    let mut detections = Vec::with_capacity(image.detections.len());
    if effects.is_identity() {
        detections.extend(image.detections.iter().cloned());
    } else {
        let mut rng = stream_rng(seed, model_id, &image.image_id, run);
        let p_miss = effects.miss_probability(image.detections.len());
        let noise = (effects.jitter_sigma > 0.0)
            .then(|| Normal::new(0.0, effects.jitter_sigma).expect("sigma is positive"));
        for det in &image.detections {
            if p_miss > 0.0 && rng.random::<f64>() < p_miss {
                continue;
            }
            detections.push(perturb(det, effects, spec, noise.as_ref(), &mut rng));
        }
        if effects.ghost_rate > 0.0 {
            let n = Poisson::new(effects.ghost_rate)
                .expect("rate is positive")
                .sample(&mut rng) as usize;
            for _ in 0..n {
                detections.push(ghost(effects, spec, &mut rng));
            }
        }
    }
    RunOutput {
        model_id: model_id.to_string(),
        image_id: image.image_id.clone(),
        run,
        detections,
    }
}

/// All runs of one mutant over the scene, image-major then run order.
pub fn simulate_mutant_runs(
    scene: &Scene,
    model_id: &str,
    effects: &EffectParams,
    n_runs: u32,
    seed: u64,
) -> Vec<RunOutput> {
    scene
        .images
        .par_iter()
        .flat_map_iter(|img| {
            (0..n_runs).map(move |run| simulate_run(img, &scene.spec, model_id, effects, run, seed))
        })
        .collect()
}

/// Original runs followed by the runs of every mutant in `grid`.
pub fn simulate_grid(
    scene: &Scene,
    grid: &[MutationConfig],
    coeffs: &EffectCoefficients,
    n_runs: u32,
    seed: u64,
) -> Vec<RunOutput> {
    let mut records = scene.original_runs(n_runs);
    for cfg in grid {
        let effects = effect_curve(&ModelId::Mutant(*cfg), coeffs);
        records.extend(simulate_mutant_runs(scene, &cfg.model_id(), &effects, n_runs, seed));
    }
    records
}
