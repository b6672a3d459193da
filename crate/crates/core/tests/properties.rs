//! Property tests for matching, scoring, statistics and the wire format.

mod common;

use proptest::prelude::*;

use uamut::io::{parse_records, write_records};
use uamut::matching::match_outputs;
use uamut::scores::{iou_ms, kill_test, obj_ms};
use uamut::stats::special::{binomial_tail_greater, binomial_tail_lesser};
use uamut::stats::{
    average_ranks, chi_square_upper, f_upper, kruskal_wallis, multiple_correlation, pearson,
    spearman, student_t_two_sided,
};
use uamut::{BBox, Detection, RunOutput};

fn detection() -> impl Strategy<Value = Detection> {
    (
        0.0f64..90.0,
        0.0f64..90.0,
        1.0f64..30.0,
        1.0f64..30.0,
        0usize..3,
        0.0f64..=1.0,
        prop::collection::vec(0.01f64..1.0, 3),
    )
        .prop_map(|(x, y, w, h, label, score, raw)| {
            let s: f64 = raw.iter().sum();
            let probs = raw.iter().map(|v| v / s).collect();
            Detection::new(BBox::new(x, y, x + w, y + h).unwrap(), label, score, probs).unwrap()
        })
}

fn detections() -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec(detection(), 0..8)
}

fn distinct_values(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, n)
}

proptest! {
    #[test]
    fn match_report_partitions_both_outputs(o in detections(), m in detections(), thr in 0.05f64..0.95) {
        let r = match_outputs(&o, &m, thr);
        prop_assert_eq!(r.matches.len() + r.miss.len(), o.len());
        prop_assert_eq!(r.matches.len() + r.ghost.len(), m.len());
        for p in &r.matches {
            prop_assert!(p.iou > thr);
            prop_assert_eq!(o[p.original].label, m[p.mutant].label);
            prop_assert!((p.iou - common::iou(o[p.original].bbox.coords(), m[p.mutant].bbox.coords())).abs() < 1e-12);
        }
    }

    #[test]
    fn matching_identical_outputs_is_identity(o in detections()) {
        // boxes of one output can overlap each other, but never beat IoU 1
        let r = match_outputs(&o, &o, 0.5);
        prop_assert!(r.is_identity());
        prop_assert!(r.matches.iter().all(|p| p.iou == 1.0));
    }

    #[test]
    fn object_scores_are_bounded(pairs in prop::collection::vec((detections(), detections()), 1..6)) {
        let reports: Vec<_> = pairs.iter().map(|(o, m)| match_outputs(o, m, 0.5)).collect();
        let [miss, ghost, mg] = obj_ms(&reports);
        for v in [miss, ghost, mg] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(mg >= miss.max(ghost) - 1e-15);
        if let Some(v) = iou_ms(&reports) {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn kill_p_value_non_increasing_in_k(n in 1usize..80, p0 in 0.01f64..0.99) {
        let mut last = f64::INFINITY;
        for k in 0..=n {
            let flags: Vec<bool> = (0..n).map(|i| i < k).collect();
            let p = kill_test(&flags, p0).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(p <= last);
            last = p;
        }
    }

    #[test]
    fn binomial_tails_are_complementary(n in 1u64..2000, frac in 0.0f64..=1.0, p0 in 0.001f64..0.999) {
        let k = ((n as f64 * frac) as u64).clamp(1, n);
        let upper = binomial_tail_greater(k, n, p0).unwrap();
        let lower = binomial_tail_lesser(k - 1, n, p0).unwrap();
        prop_assert!((upper + lower - 1.0).abs() < 1e-12);
    }

    #[test]
    fn average_ranks_sum_exactly(v in prop::collection::vec(-5i32..5, 1..60)) {
        let values: Vec<f64> = v.iter().map(|x| *x as f64).collect();
        let ranks = average_ranks(&values).unwrap();
        let n = values.len() as f64;
        prop_assert_eq!(ranks.iter().sum::<f64>(), n * (n + 1.0) / 2.0);
    }

    #[test]
    fn spearman_invariant_under_monotone_maps(x in distinct_values(3..30), y in distinct_values(3..30)) {
        let n = x.len().min(y.len());
        let (x, y) = (&x[..n], &y[..n]);
        if let Ok(base) = spearman(x, y) {
            let tx: Vec<f64> = x.iter().map(|v| (v / 100.0).exp()).collect();
            let ty: Vec<f64> = y.iter().map(|v| v * v * v + 7.0).collect();
            let moved = spearman(&tx, &ty).unwrap();
            prop_assert!((base.effect.unwrap() - moved.effect.unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&base.p_value));
        }
    }

    #[test]
    fn kruskal_wallis_invariant_under_monotone_maps(
        groups in prop::collection::vec(prop::collection::vec(-20i32..20, 1..10), 2..5)
    ) {
        let g: Vec<Vec<f64>> = groups.iter().map(|v| v.iter().map(|x| *x as f64).collect()).collect();
        let total: usize = g.iter().map(|v| v.len()).sum();
        prop_assume!(total >= 3);
        let base = kruskal_wallis(&g).unwrap();
        let moved: Vec<Vec<f64>> = g.iter().map(|v| v.iter().map(|x| 2.0 * x.powi(3) - 1.0).collect()).collect();
        let other = kruskal_wallis(&moved).unwrap();
        prop_assert!((base.statistic - other.statistic).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&base.p_value));
        let eta = base.effect.unwrap();
        prop_assert!((0.0..=1.0).contains(&eta));
    }

    #[test]
    fn multiple_correlation_dominates_simple(
        rows in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0), 5..40)
    ) {
        let x1: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let x2: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.0 * 0.5 + r.2).collect();
        if let Ok(res) = multiple_correlation(&x1, &x2, &y) {
            let big_r = res.effect.unwrap();
            let r1 = pearson(&y, &x1).unwrap().abs();
            let r2 = pearson(&y, &x2).unwrap().abs();
            prop_assert!(big_r >= r1 - 1e-9 && big_r >= r2 - 1e-9);
            prop_assert!((0.0..=1.0).contains(&res.p_value));
        }
    }

    #[test]
    fn tails_are_monotone(df in 1u32..40, a in 0.0f64..50.0, b in 0.0f64..50.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let df = df as f64;
        prop_assert!(chi_square_upper(lo, df).unwrap() >= chi_square_upper(hi, df).unwrap());
        prop_assert!(student_t_two_sided(lo, df).unwrap() >= student_t_two_sided(hi, df).unwrap());
        prop_assert!(f_upper(lo, 2.0, df).unwrap() >= f_upper(hi, 2.0, df).unwrap());
        for p in [chi_square_upper(hi, df).unwrap(), student_t_two_sided(hi, df).unwrap(), f_upper(hi, 3.0, df).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn wire_round_trip_is_fixed_point(
        recs in prop::collection::vec(("[a-z0-9_]{1,8}", 0u32..50, detections()), 0..6)
    ) {
        let records: Vec<RunOutput> = recs
            .into_iter()
            .map(|(image_id, run, detections)| RunOutput {
                model_id: "mcb:0.35x5".into(),
                image_id,
                run,
                detections,
            })
            .collect();
        let mut first = Vec::new();
        write_records(&mut first, &records).unwrap();
        let parsed = parse_records(first.as_slice()).unwrap();
        prop_assert_eq!(&parsed, &records);
        let mut second = Vec::new();
        write_records(&mut second, &parsed).unwrap();
        prop_assert_eq!(first, second);
    }
}
