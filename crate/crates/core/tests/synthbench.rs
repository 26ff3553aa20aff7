use ees_core::linalg;
use ees_core::synth::baselines::{kmeans, spans_from_labels};
use ees_core::synth::*;
use ees_core::FrameEmbedding;
use proptest::prelude::*;

fn seg(length: usize, centroid: Centroid, noise_sigma: f64, drift_rate: f64) -> SegmentSpec {
    SegmentSpec { length, centroid, noise_sigma, drift_rate }
}

fn e(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

#[test]
fn f1_hand_count() {
    let truth = GroundTruth::from_lengths(&[10, 10, 10]);
    assert_eq!(truth.boundary_frames, vec![10, 20]);
    let s = boundary_f1(&[11, 35], &truth, 1);
    assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
    let exact = boundary_f1(&truth.boundary_frames.clone(), &truth, 1);
    assert_eq!(exact.f1, 1.0);
}

/// Exhaustive search for the labelling minimising within-cluster squared
/// distance, for tiny inputs.
fn brute_force_labels(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = points.len();
    let mut best = (f64::INFINITY, vec![]);
    for code in 0..k.pow(n as u32) {
        let labels: Vec<usize> = (0..n).map(|i| (code / k.pow(i as u32)) % k).collect();
        let mut cost = 0.0;
        for c in 0..k {
            let members: Vec<&[f64]> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p.as_slice()).collect();
            if members.is_empty() {
                continue;
            }
            let m = linalg::mean(members.iter().copied(), points[0].len());
            cost += members.iter().map(|p| p.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sum::<f64>();
        }
        if cost < best.0 - 1e-12 {
            best = (cost, labels);
        }
    }
    best.1
}

#[test]
fn cluster_baseline_recovers_separable_stream() {
    let spec = SynthSpec {
        dim: 3,
        segments: vec![seg(4, Centroid::Explicit(e(3, 0)), 0.0, 0.0), seg(4, Centroid::Explicit(e(3, 1)), 0.0, 0.0)],
        seed: 0,
        min_centroid_separation: 0.2,
    };
    let (frames, truth) = generate_stream(&spec).unwrap();
    let spans = baseline_cluster_segment(&frames, 2, 3).unwrap();
    assert_eq!(span_boundaries(&spans), truth.boundary_frames);
    let points: Vec<Vec<f64>> = frames.iter().map(|f| linalg::to_f64(&f.vector)).collect();
    assert_eq!(spans, spans_from_labels(&brute_force_labels(&points, 2)));

    let one = baseline_cluster_segment(&frames, 1, 3).unwrap();
    assert_eq!(one, vec![Span { start: 0, end: 7 }]);
}

#[test]
fn threshold_baseline_noiseless_and_vacuous() {
    let spec = SynthSpec {
        dim: 2,
        segments: vec![seg(3, Centroid::Explicit(e(2, 0)), 0.0, 0.0), seg(3, Centroid::Explicit(e(2, 1)), 0.0, 0.0)],
        seed: 0,
        min_centroid_separation: 0.2,
    };
    let (frames, truth) = generate_stream(&spec).unwrap();
    let spans = baseline_threshold_segment(&frames, 0.5).unwrap();
    assert_eq!(span_boundaries(&spans), truth.boundary_frames);
    assert_eq!(baseline_threshold_segment(&frames, -1.0).unwrap().len(), 1);
}

#[test]
fn threshold_baseline_over_fragments_slow_drift() {
    // one planted scene; noise alone pushes some adjacent-frame similarities
    // under a strict threshold
    let spec = SynthSpec {
        dim: 32,
        segments: vec![seg(120, Centroid::Drawn(0), 0.3, 0.005)],
        seed: 17,
        min_centroid_separation: 0.2,
    };
    let (frames, truth) = generate_stream(&spec).unwrap();
    assert_eq!(truth.segment_count(), 1);
    let spans = baseline_threshold_segment(&frames, 0.95).unwrap();
    assert!(spans.len() > 1, "got {} segments", spans.len());
    let h = ees_core::segment_stream(ees_core::EesConfig::new(32), &frames).unwrap();
    assert_eq!(h.level(1).len(), 1);
}

#[test]
fn clean_generator_statistics() {
    // d=64, 5 x 20 frames, sigma 0.05, separation <= 0.2
    let spec = SynthSpec {
        dim: 64,
        segments: (0..5).map(|i| seg(20, Centroid::Drawn(i), 0.05, 0.0)).collect(),
        seed: 2024,
        min_centroid_separation: 0.2,
    };
    let (frames, truth) = generate_stream(&spec).unwrap();
    let spans: Vec<Span> = (0..5).map(|i| Span { start: i * 20, end: i * 20 + 19 }).collect();
    assert_eq!(span_boundaries(&spans), truth.boundary_frames);
    let c = cohesion_metrics(&frames, &spans);
    assert!(c.mean_intra.unwrap() > 0.95, "{c:?}");
    assert!(c.mean_inter.unwrap() < 0.25, "{c:?}");
}

#[test]
fn distinct_seeds_distinct_centroids() {
    let spec = |seed| SynthSpec {
        dim: 8,
        segments: vec![seg(1, Centroid::Drawn(0), 0.0, 0.0)],
        seed,
        min_centroid_separation: 0.2,
    };
    let a = generate_stream(&spec(1)).unwrap().0;
    let b = generate_stream(&spec(2)).unwrap().0;
    assert_eq!(a, generate_stream(&spec(1)).unwrap().0);
    assert_ne!(a, b);
}

fn frames_strategy() -> impl Strategy<Value = Vec<FrameEmbedding>> {
    prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 3), 2..30).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r[0] += 1.5;
                FrameEmbedding::new(i as u64, r)
            })
            .collect()
    })
}

fn cuts_strategy(n: usize) -> impl Strategy<Value = Vec<Span>> {
    prop::collection::btree_set(1..n as u64, 0..n).prop_map(move |cuts| {
        let mut spans = Vec::new();
        let mut start = 0;
        for c in cuts {
            spans.push(Span { start, end: c - 1 });
            start = c;
        }
        spans.push(Span { start, end: n as u64 - 1 });
        spans
    })
}

proptest! {
    #[test]
    fn f1_symmetric_on_exact_matches(b in prop::collection::btree_set(1u64..200, 0..12), tol in 0u64..3) {
        let v: Vec<u64> = b.into_iter().collect();
        let s = boundary_f1_frames(&v, &v, tol);
        prop_assert_eq!(s.f1, 1.0);
        prop_assert_eq!(s, boundary_f1_frames(&v, &v, tol));
    }

    #[test]
    fn f1_within_unit_interval_and_order_free(
        p in prop::collection::vec(0u64..100, 0..10),
        t in prop::collection::btree_set(1u64..100, 0..10),
        tol in 0u64..4,
    ) {
        let t: Vec<u64> = t.into_iter().collect();
        let s = boundary_f1_frames(&p, &t, tol);
        for x in [s.precision, s.recall, s.f1] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
        let mut rev = p.clone();
        rev.reverse();
        prop_assert_eq!(s, boundary_f1_frames(&rev, &t, tol));
    }

    #[test]
    fn cohesion_is_pure((frames, spans) in frames_strategy().prop_flat_map(|f| {
        let n = f.len();
        (Just(f), cuts_strategy(n))
    })) {
        let a = cohesion_metrics(&frames, &spans);
        prop_assert_eq!(a, cohesion_metrics(&frames, &spans));
        if let Some(g) = a.gap {
            prop_assert!((a.mean_intra.unwrap() - a.mean_inter.unwrap() - g).abs() < 1e-12);
        }
    }

    #[test]
    fn refinement_keeps_noiseless_intra(lengths in prop::collection::vec(2usize..8, 1..5), extra in prop::collection::btree_set(1u64..40, 0..6)) {
        let dim = 6;
        let spec = SynthSpec {
            dim,
            segments: lengths.iter().enumerate().map(|(i, &l)| seg(l, Centroid::Explicit(e(dim, i)), 0.0, 0.0)).collect(),
            seed: 0,
            min_centroid_separation: 0.2,
        };
        let (frames, truth) = generate_stream(&spec).unwrap();
        let n = frames.len() as u64;
        let true_spans = {
            let mut s = Vec::new();
            let mut start = 0;
            for &b in &truth.boundary_frames {
                s.push(Span { start, end: b - 1 });
                start = b;
            }
            s.push(Span { start, end: n - 1 });
            s
        };
        let mut cuts: std::collections::BTreeSet<u64> = truth.boundary_frames.iter().copied().collect();
        cuts.extend(extra.into_iter().filter(|&c| c < n));
        let mut refined = Vec::new();
        let mut start = 0;
        for c in cuts {
            refined.push(Span { start, end: c - 1 });
            start = c;
        }
        refined.push(Span { start, end: n - 1 });
        let base = cohesion_metrics(&frames, &true_spans).mean_intra;
        let finer = cohesion_metrics(&frames, &refined).mean_intra;
        if let (Some(b), Some(f)) = (base, finer) {
            prop_assert!(f >= b - 1e-12);
        }
    }

    #[test]
    fn kmeans_labels_are_nearest_centroid(points in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 3..25), k in 1usize..4, seed in any::<u64>()) {
        let fit = kmeans(&points, k, seed, 100).unwrap();
        prop_assert_eq!(fit.labels.len(), points.len());
        if fit.iterations < 100 {
            for (p, &l) in points.iter().zip(&fit.labels) {
                let d = |c: &Vec<f64>| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
                let best = fit.centroids.iter().map(d).fold(f64::INFINITY, f64::min);
                prop_assert!(d(&fit.centroids[l]) <= best + 1e-9);
            }
        }
    }
}
