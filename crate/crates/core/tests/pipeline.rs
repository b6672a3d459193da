//! Simulator output through validation and analysis, driven as a library.

use std::collections::BTreeMap;

use uamut::analysis::{analyze, AnalysisInput};
use uamut::io::validate_run_set;
use uamut::matching::match_outputs;
use uamut::report::NullSource;
use uamut::scores::{Criterion, ScoreKey};
use uamut::simulator::{simulate_grid, simulate_scene, EffectCoefficients, Scene, SceneSpec};
use uamut::{AnalysisConfig, BBox, Error, GroundTruthObject, MutationConfig, RunOutput};

fn scene(n_images: usize, objects: (usize, usize), prefix: &str, seed: u64) -> Scene {
    simulate_scene(&SceneSpec {
        n_images,
        objects_per_image: objects,
        image_prefix: prefix.into(),
        seed,
        ..SceneSpec::default()
    })
}

fn config(n_runs: usize) -> AnalysisConfig {
    AnalysisConfig {
        n_runs,
        ..AnalysisConfig::default()
    }
}

/// Share of original objects a mutant drops, pooled over images and runs.
fn realized_miss(records: &[RunOutput], model_id: &str) -> f64 {
    let reference: BTreeMap<&str, &RunOutput> = records
        .iter()
        .filter(|r| r.model_id == "original" && r.run == 0)
        .map(|r| (r.image_id.as_str(), r))
        .collect();
    let (mut missed, mut total) = (0usize, 0usize);
    for r in records.iter().filter(|r| r.model_id == model_id) {
        let orig = reference[r.image_id.as_str()];
        let m = match_outputs(&orig.detections, &r.detections, 0.5);
        missed += m.miss.len();
        total += orig.detections.len();
    }
    missed as f64 / total as f64
}

#[test]
fn simulated_records_form_a_complete_run_set() {
    let s = scene(20, (1, 5), "img", 1);
    let mut grid = MutationConfig::mcd_grid();
    grid.extend(MutationConfig::mcb_grid());
    let records = simulate_grid(&s, &grid, &EffectCoefficients::default(), 5, 1);
    let v = validate_run_set(&records, 5);
    assert!(v.is_complete(), "{:?}", v.defects);
    assert_eq!(v.models, 55);
    assert_eq!(v.images, 20);
    assert_eq!(records.len(), 55 * 20 * 5);
}

#[test]
fn realized_miss_rate_grows_along_the_dropout_grid() {
    let s = scene(120, (1, 5), "img", 4);
    let grid = MutationConfig::mcd_grid();
    let records = simulate_grid(&s, &grid, &EffectCoefficients::default(), 10, 4);
    let rates: Vec<f64> = grid.iter().map(|c| realized_miss(&records, &c.model_id())).collect();
    for w in rates.windows(2) {
        assert!(w[1] > w[0], "miss rates not increasing: {rates:?}");
    }
}

#[test]
fn heavy_dropout_misses_more_than_light_dropout_for_every_seed() {
    let grid = vec![MutationConfig::mcd(0.1).unwrap(), MutationConfig::mcd(0.5).unwrap()];
    for seed in 0..10 {
        let s = scene(100, (1, 5), "img", seed);
        let records = simulate_grid(&s, &grid, &EffectCoefficients::default(), 30, seed);
        let light = realized_miss(&records, "mcd:0.10");
        let heavy = realized_miss(&records, "mcd:0.50");
        assert!(heavy > light, "seed {seed}: {heavy} <= {light}");
    }
}

#[test]
fn crowded_suites_lose_more_objects_for_every_seed() {
    let grid = MutationConfig::mcd_grid();
    for seed in 0..10 {
        let easy = scene(30, (1, 2), "easy", seed);
        let hard = scene(30, (10, 12), "hard", seed);
        let coeffs = EffectCoefficients::default();
        let mut records = simulate_grid(&easy, &grid, &coeffs, 8, seed);
        records.extend(simulate_grid(&hard, &grid, &coeffs, 8, seed));
        let suites: BTreeMap<String, String> = easy
            .images
            .iter()
            .map(|i| (i.image_id.clone(), "easy".to_string()))
            .chain(hard.images.iter().map(|i| (i.image_id.clone(), "hard".to_string())))
            .collect();
        let input = AnalysisInput {
            records: &records,
            suites: Some(&suites),
            ..AnalysisInput::default()
        };
        let report = analyze(&input, &config(8)).unwrap();
        let key = ScoreKey::Obj(Criterion::Miss);
        let mean = |label: &str| {
            report
                .suites
                .iter()
                .find(|s| s.suite == label)
                .and_then(|s| s.means.get(key))
                .unwrap()
        };
        assert!(mean("hard") > mean("easy"), "seed {seed}");
    }
}

#[test]
fn ground_truth_filter_drops_failed_images() {
    let s = scene(10, (1, 3), "img", 9);
    let grid = vec![MutationConfig::mcd(0.2).unwrap()];
    let records = simulate_grid(&s, &grid, &EffectCoefficients::default(), 4, 9);
    let mut gt = s.ground_truth();
    // a ground-truth object far from every detection costs the image its recall
    gt[3].objects.push(GroundTruthObject {
        bbox: BBox::new(0.0, 0.0, 2.0, 2.0).unwrap(),
        label: 0,
    });
    let input = AnalysisInput {
        records: &records,
        ground_truth: Some(&gt),
        ..AnalysisInput::default()
    };
    let report = analyze(&input, &config(4)).unwrap();
    assert_eq!(report.images.total, 10);
    assert_eq!(report.images.analysed, 9);
    assert_eq!(report.images.dropped_by_filter, vec![gt[3].image_id.clone()]);
    assert_eq!(report.rows[0].images, 9);
}

#[test]
fn ground_truth_without_original_output_is_an_error() {
    let s = scene(4, (1, 3), "img", 2);
    let records = simulate_grid(&s, &[MutationConfig::mcd(0.2).unwrap()], &EffectCoefficients::default(), 3, 2);
    let mut gt = s.ground_truth();
    let mut extra = gt[0].clone();
    extra.image_id = "img_9999".into();
    gt.push(extra);
    let input = AnalysisInput {
        records: &records,
        ground_truth: Some(&gt),
        ..AnalysisInput::default()
    };
    match analyze(&input, &config(3)) {
        Err(Error::MissingOriginalOutput(id)) => assert_eq!(id, "img_9999"),
        other => panic!("expected a missing-output error, got {other:?}"),
    }
}

#[test]
fn missing_original_model_is_an_error() {
    let s = scene(4, (1, 3), "img", 2);
    let records: Vec<RunOutput> = simulate_grid(&s, &[MutationConfig::mcd(0.2).unwrap()], &EffectCoefficients::default(), 3, 2)
        .into_iter()
        .filter(|r| r.model_id != "original")
        .collect();
    let input = AnalysisInput {
        records: &records,
        ..AnalysisInput::default()
    };
    assert!(analyze(&input, &config(3)).is_err());
}

#[test]
fn calibrated_null_rate_reflects_a_deterministic_original() {
    let s = scene(6, (1, 3), "img", 5);
    let records = simulate_grid(&s, &[MutationConfig::mcd(0.3).unwrap()], &EffectCoefficients::default(), 5, 5);
    let input = AnalysisInput {
        records: &records,
        calibrate_null_p: true,
        ..AnalysisInput::default()
    };
    let report = analyze(&input, &config(5)).unwrap();
    assert_eq!(report.null_source, NullSource::Calibrated);
    // 6 images × 4 non-reference runs, none diverging
    assert!((report.null_p - 0.5 / 25.0).abs() < 1e-15);

    let fixed = analyze(&AnalysisInput { calibrate_null_p: false, ..input }, &config(5)).unwrap();
    assert_eq!(fixed.null_source, NullSource::Configured);
    assert_eq!(fixed.null_p, 0.05);
}
