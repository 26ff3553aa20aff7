use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ees_core::{read_stream, write_stream, FrameEmbedding, SegmentRecord, StreamHeader};
use serde_json::Value;
use tempfile::TempDir;

fn ees(args: &[&str]) -> Output {
    ees_env(args, &[])
}

fn ees_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ees"));
    cmd.args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("EES_") {
            cmd.env_remove(k);
        }
    }
    cmd.envs(env.iter().copied());
    cmd.output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Five frames along x then five along y.
fn hand_trace(dir: &Path) -> PathBuf {
    let frames: Vec<FrameEmbedding> = (0..10)
        .map(|i| FrameEmbedding::new(i, if i < 5 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }))
        .collect();
    write_frames(dir, "trace.embs", &frames)
}

fn write_frames(dir: &Path, name: &str, frames: &[FrameEmbedding]) -> PathBuf {
    let path = dir.join(name);
    let header = StreamHeader::bounded(frames[0].dim() as u32, frames.len() as u64);
    std::fs::write(&path, write_stream(&header, frames).unwrap()).unwrap();
    path
}

fn records(path: &Path) -> Vec<SegmentRecord> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn segment_hand_trace() {
    let dir = TempDir::new().unwrap();
    let input = hand_trace(dir.path());
    let out = dir.path().join("seg.jsonl");
    ok(&ees(&["segment", p(&input), "--out", p(&out)]));
    let level1: Vec<_> = records(&out).into_iter().filter(|r| r.level == 1).collect();
    let spans: Vec<_> = level1.iter().map(|r| (r.start_frame, r.end_frame, r.provisional)).collect();
    assert_eq!(spans, vec![(0, 4, false), (5, 9, true)]);
    // first y frame is orthogonal to the x prototype
    assert_eq!(level1[1].essential_frame, 5);
    assert_eq!(level1[1].error_peak, 1.0);
    assert!(level1.iter().all(|r| r.embedding.is_none()));
}

#[test]
fn stats_go_to_file() {
    let dir = TempDir::new().unwrap();
    let input = hand_trace(dir.path());
    let stats = dir.path().join("stats.json");
    let out = ees(&["segment", p(&input), "--stats", p(&stats)]);
    ok(&out);
    let v: Value = serde_json::from_slice(&std::fs::read(&stats).unwrap()).unwrap();
    assert_eq!(v["counts"][0], 2);
    let total: u64 = v["counts"].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count() as u64, total);
}

#[test]
fn missing_input_exits_2_without_output() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("seg.jsonl");
    let r = ees(&["segment", p(&dir.path().join("nope.embs")), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn bad_magic_exits_2() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("bad.embs");
    std::fs::write(&input, [0u8; 40]).unwrap();
    assert_eq!(ees(&["segment", p(&input)]).status.code(), Some(2));
}

#[test]
fn bad_config_exits_3() {
    let dir = TempDir::new().unwrap();
    let input = hand_trace(dir.path());
    assert_eq!(ees(&["segment", p(&input), "--threshold", "2.5"]).status.code(), Some(3));
    assert_eq!(ees(&["segment", p(&input), "--predictor", "lstm"]).status.code(), Some(3));
    assert_eq!(ees(&["segment", p(&input), "--layers", "2", "--threshold", "0.1,0.2,0.3"]).status.code(), Some(3));
}

#[test]
fn consolidate_without_embeddings_exits_4() {
    let dir = TempDir::new().unwrap();
    let input = hand_trace(dir.path());
    let seg = dir.path().join("seg.jsonl");
    ok(&ees(&["segment", p(&input), "--out", p(&seg)]));
    let r = ees(&["consolidate", "--hierarchy", p(&seg), "--input", p(&input)]);
    assert_eq!(r.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&r.stderr).contains("--emit-embeddings"));
}

fn segment_and_consolidate(dir: &Path, input: &Path, extra: &[&str]) -> (Value, PathBuf) {
    let seg = dir.join("seg.jsonl");
    ok(&ees(&["segment", p(input), "--emit-embeddings", "--out", p(&seg)]));
    let json = dir.join("events.json");
    let embs = dir.join("events.embs");
    let mut args = vec!["consolidate", "--hierarchy", p(&seg), "--input", p(input), "--out", p(&json), "--out-embs", p(&embs)];
    args.extend_from_slice(extra);
    ok(&ees(&args));
    (serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap(), embs)
}

#[test]
fn segment_then_consolidate() {
    let dir = TempDir::new().unwrap();
    let input = hand_trace(dir.path());
    let (doc, embs) = segment_and_consolidate(dir.path(), &input, &[]);
    let events = doc["events"].as_array().unwrap();
    assert!(!events.is_empty());
    for e in events {
        for key in ["abstract", "coarse", "fine"] {
            assert_eq!(e[key].as_array().unwrap().len(), 2, "{key}");
        }
    }
    let (header, rows) = read_stream(&std::fs::read(embs).unwrap()).unwrap();
    assert_eq!(header.dim, 2);
    assert_eq!(rows.len(), 3 * events.len());
}

#[test]
fn essential_strategies() {
    let dir = TempDir::new().unwrap();
    let frames: Vec<FrameEmbedding> = (0..40)
        .map(|i| {
            let a = (i / 10) as f32 * 1.3 + (i % 10) as f32 * 0.02;
            FrameEmbedding::new(i, vec![a.cos(), a.sin(), 0.1])
        })
        .collect();
    let input = write_frames(dir.path(), "arc.embs", &frames);
    let mut abstracts = Vec::new();
    for strategy in ["max_error", "middle", "random"] {
        let sub = dir.path().join(strategy);
        std::fs::create_dir(&sub).unwrap();
        let (doc, _) = segment_and_consolidate(&sub, &input, &["--essential", strategy, "--seed", "4"]);
        abstracts.push(doc["events"][0]["abstract"].clone());
        // coarse does not depend on the strategy
        assert!(doc["events"][0]["coarse"].is_array());
    }
    let (doc, _) = segment_and_consolidate(dir.path(), &input, &["--essential", "random", "--seed", "4"]);
    assert_eq!(doc["events"][0]["abstract"], abstracts[2]);
    assert_eq!(ees(&["consolidate", "--hierarchy", "x", "--input", "y", "--essential", "first"]).status.code(), Some(3));
}

#[test]
fn flags_match_config_file() {
    let dir = TempDir::new().unwrap();
    let input = hand_trace(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# two levels\nlevels = 2\nthreshold = [0.3, 0.5]\nwindow_cap = 16\n").unwrap();
    let a = ees(&["segment", p(&input), "--config", p(&cfg)]);
    let b = ees(&["segment", p(&input), "--layers", "2", "--threshold", "0.3,0.5", "--window-cap", "16"]);
    ok(&a);
    ok(&b);
    assert_eq!(a.stdout, b.stdout);
    assert!(records_from(&a.stdout).iter().all(|r| r.level <= 2));
}

fn records_from(bytes: &[u8]) -> Vec<SegmentRecord> {
    String::from_utf8_lossy(bytes).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn env_overrides_flags() {
    let dir = TempDir::new().unwrap();
    let input = hand_trace(dir.path());
    let r = ees_env(&["segment", p(&input), "--layers", "3"], &[("EES_LAYERS", "1")]);
    ok(&r);
    assert!(records_from(&r.stdout).iter().all(|r| r.level == 1));
}

#[test]
fn unsatisfiable_separation_exits_3() {
    let r = ees(&["bench", "--corpus", "clean", "--streams", "2", "--dim", "2", "--separation", "-0.99"]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn generate_then_bench_from_manifest() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&ees(&["generate", "--out", p(&corpus), "--streams", "5", "--dim", "16", "--seed", "3"]));
    let manifest = corpus.join("manifest.json");
    assert!(manifest.exists());
    let report = dir.path().join("report.json");
    let csv = dir.path().join("report.csv");
    let timing = dir.path().join("timing.json");
    ok(&ees(&[
        "bench",
        "--manifest",
        p(&manifest),
        "--out",
        p(&report),
        "--csv",
        p(&csv),
        "--timing",
        p(&timing),
        "--serial",
        "--seed",
        "3",
    ]));
    let v: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(v["summary"]["streams"], 5);
    // header plus one row per stream and method
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 5 * 3);
    assert!(timing.exists());

    // same corpus generated in memory gives the same report
    let direct = dir.path().join("direct.json");
    ok(&ees(&["bench", "--streams", "5", "--dim", "16", "--seed", "3", "--out", p(&direct)]));
    assert_eq!(std::fs::read(&report).unwrap(), std::fs::read(&direct).unwrap());
}

fn loss_rows(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
}

#[test]
fn train_linear_ar() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&ees(&["generate", "--out", p(&corpus), "--streams", "4", "--dim", "8", "--corpus", "drift", "--seed", "1"]));
    let manifest = corpus.join("manifest.json");
    let ckpt = dir.path().join("ar.eesp");
    let args = ["train", "--manifest", p(&manifest), "--predictor", "linear_ar", "--epochs", "3"];
    ok(&ees(&[&args[..], &["--out", p(&ckpt)]].concat()));
    let losses = loss_rows(&dir.path().join("ar.eesp.loss.csv"));
    assert_eq!(losses.len(), 3);
    assert!(losses.iter().all(|l| *l > 0.0));
    assert!(losses[2] <= losses[0], "{losses:?}");

    let again = dir.path().join("again.eesp");
    ok(&ees(&[&args[..], &["--out", p(&again)]].concat()));
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(&again).unwrap());

    // the checkpoint drives segmentation
    let input = corpus.join("stream_000.embs");
    ok(&ees(&["segment", p(&input), "--checkpoint", p(&ckpt)]));

    // zero epochs writes the freshly initialized predictor
    let zero = dir.path().join("zero.eesp");
    ok(&ees(&["train", "--manifest", p(&manifest), "--predictor", "linear_ar", "--epochs", "0", "--out", p(&zero)]));
    assert_ne!(std::fs::read(&zero).unwrap(), std::fs::read(&ckpt).unwrap());
    assert_eq!(loss_rows(&dir.path().join("zero.eesp.loss.csv")).len(), 0);
}

#[test]
fn train_rejects_untrainable_and_empty() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&ees(&["generate", "--out", p(&corpus), "--streams", "1", "--dim", "4"]));
    let manifest = corpus.join("manifest.json");
    let out = dir.path().join("x.eesp");
    let r = ees(&["train", "--manifest", p(&manifest), "--predictor", "mean_pool_identity", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(3));

    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, r#"{"version":1,"params":null,"streams":[]}"#).unwrap();
    let r = ees(&["train", "--manifest", p(&empty), "--predictor", "linear_ar", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
}
