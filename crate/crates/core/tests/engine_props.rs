use ees_core::hierarchy::{hierarchy_stats, write_record};
use ees_core::{EesConfig, EesEngine, EventSegment, FrameEmbedding, PredictorKind};
use proptest::prelude::*;

fn frames_from(rows: &[Vec<f32>]) -> Vec<FrameEmbedding> {
    rows.iter().enumerate().map(|(i, r)| FrameEmbedding::new(i as u64, r.clone())).collect()
}

/// Rows drawn near a handful of directions so boundaries actually happen.
fn stream_strategy(dim: usize, max_len: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    let row = (0..4usize, prop::collection::vec(-0.3f32..0.3, dim)).prop_map(move |(c, noise)| {
        let mut v = noise;
        v[c % dim] += 1.0;
        v
    });
    prop::collection::vec(row, 1..max_len)
}

fn run(config: &EesConfig, frames: &[FrameEmbedding]) -> (Vec<Vec<EventSegment>>, EesEngine) {
    let mut e = EesEngine::new(config.clone()).unwrap();
    let emitted = frames.iter().map(|f| e.ingest_frame(f).unwrap()).collect();
    (emitted, e)
}

fn jsonl(segments: &[EventSegment]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in segments {
        write_record(&mut out, s, true).unwrap();
    }
    out
}

fn configs(dim: usize) -> Vec<EesConfig> {
    let mut linear = EesConfig::with_predictor(dim, PredictorKind::LinearAr).threshold(0.3);
    linear.online_learning = true;
    linear.predictor.seed = 5;
    vec![EesConfig::new(dim), EesConfig::new(dim).window_cap(3).threshold(0.2), linear]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prefix_emissions_ignore_the_future(
        rows in stream_strategy(4, 60),
        tail in stream_strategy(4, 20),
        cut in any::<prop::sample::Index>(),
    ) {
        for cfg in configs(4) {
            let t = cut.index(rows.len()) + 1;
            let original = frames_from(&rows);
            let mut mutated_rows = rows[..t].to_vec();
            mutated_rows.extend(tail.iter().cloned());
            let mutated = frames_from(&mutated_rows);
            let (a, _) = run(&cfg, &original);
            let (b, _) = run(&cfg, &mutated);
            let a_bytes: Vec<u8> = a[..t].iter().flat_map(|s| jsonl(s)).collect();
            let b_bytes: Vec<u8> = b[..t].iter().flat_map(|s| jsonl(s)).collect();
            prop_assert_eq!(a_bytes, b_bytes);
        }
    }

    #[test]
    fn flushed_hierarchy_tiles_the_stream(rows in stream_strategy(3, 80)) {
        for cfg in configs(3) {
            let frames = frames_from(&rows);
            let (_, e) = run(&cfg, &frames);
            let h = e.flush();
            h.validate().unwrap();
            let l1 = h.level(1);
            prop_assert_eq!(l1.first().unwrap().start_frame, 0);
            prop_assert_eq!(l1.last().unwrap().end_frame, frames.len() as u64 - 1);
            for w in l1.windows(2) {
                prop_assert_eq!(w[0].end_frame + 1, w[1].start_frame);
            }
            for level in 2..=h.depth() {
                let segs = h.level(level);
                prop_assert!(!segs.is_empty());
                prop_assert_eq!(segs.last().unwrap().end_frame, frames.len() as u64 - 1);
                // one level-l token per level-(l-1) segment
                prop_assert_eq!(segs.last().unwrap().end + 1, h.level(level - 1).len() as u64);
            }
        }
    }

    #[test]
    fn counts_shrink_with_level_and_grow_with_length(rows in stream_strategy(3, 80), cut in any::<prop::sample::Index>()) {
        let cfg = EesConfig::new(3).threshold(0.15);
        let frames = frames_from(&rows);
        let t = cut.index(frames.len()) + 1;
        let full = hierarchy_stats(&run(&cfg, &frames).1.flush()).counts;
        let prefix = hierarchy_stats(&run(&cfg, &frames[..t]).1.flush()).counts;
        for w in full.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        for (p, f) in prefix.iter().zip(&full) {
            prop_assert!(p <= f);
        }
    }

    #[test]
    fn identical_runs_identical_output(rows in stream_strategy(4, 50)) {
        for cfg in configs(4) {
            let frames = frames_from(&rows);
            let (a, ea) = run(&cfg, &frames);
            let (b, eb) = run(&cfg, &frames);
            prop_assert_eq!(a, b);
            prop_assert_eq!(jsonl(&ea.flush_segments()), jsonl(&eb.flush_segments()));
        }
    }

    #[test]
    fn mean_pool_engine_ignores_window_order_effects(rows in stream_strategy(3, 40)) {
        // with a cap larger than the stream, the mean-pool latent is the plain
        // mean of the segment's tokens
        let cfg = EesConfig::new(3).window_cap(64);
        let (_, e) = run(&cfg, &frames_from(&rows));
        for seg in e.flush().level(1) {
            let n = seg.tokens.len() as f64;
            for k in 0..3 {
                let m: f64 = seg.tokens.iter().map(|t| t.vector[k]).sum::<f64>() / n;
                prop_assert!((seg.embedding[k] - m).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn open_memory_does_not_grow_with_retention_off() {
    let mut cfg = EesConfig::new(4).window_cap(8);
    cfg.retain_hierarchy = false;
    cfg.retain_tokens = false;
    let mut e = EesEngine::new(cfg).unwrap();
    for i in 0..5000u64 {
        let mut v = vec![0.0f32; 4];
        v[((i / 7) % 4) as usize] = 1.0;
        e.ingest_frame(&FrameEmbedding::new(i, v)).unwrap();
        for l in 1..=3 {
            assert!(e.level_snapshot(l).context_len <= 8);
        }
    }
    assert_eq!(e.hierarchy().segment_count(), 0);
    assert!(e.flush_segments().iter().all(|s| s.tokens.is_empty()));
}
