//! EES against the two reference segmenters over a corpus.
//!
//! The report is a pure function of its inputs; wall-clock numbers are kept in
//! a separate [`BenchTiming`] so reports from identical runs are byte-identical.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{segment_stream, EesConfig};
use crate::error::Result;
use crate::hierarchy::hierarchy_stats;
use crate::synth::baselines::{
    baseline_cluster_segment, baseline_threshold_segment, span_boundaries, Span, DEFAULT_SIM_THRESHOLD,
};
use crate::synth::corpus::CorpusStream;
use crate::synth::metrics::{boundary_f1, cohesion_metrics, BoundaryScore, Cohesion};

pub const DEFAULT_TOLERANCE: u64 = 1;
pub const SIMILARITY_STATISTIC: &str = "pairwise_mean";

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub ees: EesConfig,
    pub sim_threshold: f64,
    pub tolerance: u64,
    pub cluster_seed: u64,
    pub parallel: bool,
}

impl BenchConfig {
    pub fn new(ees: EesConfig) -> Self {
        Self { ees, sim_threshold: DEFAULT_SIM_THRESHOLD, tolerance: DEFAULT_TOLERANCE, cluster_seed: 0, parallel: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub levels: usize,
    pub thresholds: Vec<f64>,
    pub window_cap: usize,
    pub predictor: String,
    pub sim_threshold: f64,
    pub tolerance: u64,
    pub cluster_seed: u64,
    /// How the cluster baseline's k is chosen.
    pub cluster_k: String,
    pub similarity_statistic: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub segments: usize,
    pub boundaries: Vec<u64>,
    pub boundary: Option<BoundaryScore>,
    pub cohesion: Cohesion,
    /// Frames per top-level segment.
    pub compression_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamResult {
    pub id: String,
    pub frames: usize,
    pub planted_segments: Option<usize>,
    /// EES segment count per level.
    pub level_counts: Vec<usize>,
    pub ees: MethodResult,
    pub threshold: MethodResult,
    pub cluster: MethodResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_f1: Option<f64>,
    pub mean_gap: Option<f64>,
    pub mean_compression_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub streams: usize,
    pub ees: MethodSummary,
    pub threshold: MethodSummary,
    pub cluster: MethodSummary,
    /// Fraction of streams where the EES cohesion gap is strictly larger.
    pub ees_gap_beats_threshold: f64,
    pub ees_gap_beats_cluster: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub settings: BenchSettings,
    pub streams: Vec<StreamResult>,
    pub summary: BenchSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamTiming {
    pub id: String,
    pub ees_ms: f64,
    pub threshold_ms: f64,
    pub cluster_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTiming {
    pub streams: Vec<StreamTiming>,
    pub total_ms: f64,
}

fn method_result(
    stream: &CorpusStream,
    spans: &[Span],
    top_segments: usize,
    tolerance: u64,
) -> MethodResult {
    let boundaries = span_boundaries(spans);
    MethodResult {
        segments: spans.len(),
        boundary: stream.truth.as_ref().map(|t| boundary_f1(&boundaries, t, tolerance)),
        boundaries,
        cohesion: cohesion_metrics(&stream.frames, spans),
        compression_ratio: (top_segments > 0).then(|| stream.frames.len() as f64 / top_segments as f64),
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

pub fn run_stream(stream: &CorpusStream, cfg: &BenchConfig) -> Result<(StreamResult, StreamTiming)> {
    let t = Instant::now();
    let ees_cfg = EesConfig { retain_tokens: false, ..cfg.ees.clone() };
    let h = segment_stream(ees_cfg, &stream.frames)?;
    let ees_ms = elapsed_ms(t);
    let ees_spans: Vec<Span> = h.level(1).iter().map(|s| Span { start: s.start_frame, end: s.end_frame }).collect();
    let stats = hierarchy_stats(&h);

    let t = Instant::now();
    let thr_spans = baseline_threshold_segment(&stream.frames, cfg.sim_threshold)?;
    let threshold_ms = elapsed_ms(t);

    let planted = stream.truth.as_ref().map(|t| t.segment_count());
    let k = planted.unwrap_or(ees_spans.len()).clamp(1, stream.frames.len().max(1));
    let t = Instant::now();
    let cl_spans = baseline_cluster_segment(&stream.frames, k, cfg.cluster_seed)?;
    let cluster_ms = elapsed_ms(t);

    let result = StreamResult {
        id: stream.id.clone(),
        frames: stream.frames.len(),
        planted_segments: planted,
        level_counts: stats.counts.clone(),
        ees: method_result(stream, &ees_spans, h.top_level().len(), cfg.tolerance),
        threshold: method_result(stream, &thr_spans, thr_spans.len(), cfg.tolerance),
        cluster: method_result(stream, &cl_spans, cl_spans.len(), cfg.tolerance),
    };
    let timing = StreamTiming { id: stream.id.clone(), ees_ms, threshold_ms, cluster_ms };
    Ok((result, timing))
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(streams: &[StreamResult], pick: impl Fn(&StreamResult) -> &MethodResult) -> MethodSummary {
    MethodSummary {
        mean_precision: mean(streams.iter().map(|s| pick(s).boundary.map(|b| b.precision))),
        mean_recall: mean(streams.iter().map(|s| pick(s).boundary.map(|b| b.recall))),
        mean_f1: mean(streams.iter().map(|s| pick(s).boundary.map(|b| b.f1))),
        mean_gap: mean(streams.iter().map(|s| pick(s).cohesion.gap)),
        mean_compression_ratio: mean(streams.iter().map(|s| pick(s).compression_ratio)),
    }
}

fn fraction(streams: &[StreamResult], pred: impl Fn(&StreamResult) -> bool) -> f64 {
    if streams.is_empty() {
        return 0.0;
    }
    streams.iter().filter(|s| pred(s)).count() as f64 / streams.len() as f64
}

pub fn run_bench(corpus: &[CorpusStream], cfg: &BenchConfig) -> Result<(BenchReport, BenchTiming)> {
    cfg.ees.validate()?;
    let start = Instant::now();
    let results: Vec<(StreamResult, StreamTiming)> = if cfg.parallel {
        corpus.par_iter().map(|s| run_stream(s, cfg)).collect::<Result<_>>()?
    } else {
        corpus.iter().map(|s| run_stream(s, cfg)).collect::<Result<_>>()?
    };
    let (streams, timings): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let summary = BenchSummary {
        streams: streams.len(),
        ees: summarize(&streams, |s| &s.ees),
        threshold: summarize(&streams, |s| &s.threshold),
        cluster: summarize(&streams, |s| &s.cluster),
        ees_gap_beats_threshold: fraction(&streams, |s| s.ees.cohesion.gap_exceeds(&s.threshold.cohesion)),
        ees_gap_beats_cluster: fraction(&streams, |s| s.ees.cohesion.gap_exceeds(&s.cluster.cohesion)),
    };
    let settings = BenchSettings {
        levels: cfg.ees.levels,
        thresholds: cfg.ees.thresholds.clone(),
        window_cap: cfg.ees.window_cap,
        predictor: cfg.ees.predictor.kind.to_string(),
        sim_threshold: cfg.sim_threshold,
        tolerance: cfg.tolerance,
        cluster_seed: cfg.cluster_seed,
        cluster_k: "planted_segments".into(),
        similarity_statistic: SIMILARITY_STATISTIC.into(),
    };
    let timing = BenchTiming { streams: timings, total_ms: elapsed_ms(start) };
    Ok((BenchReport { settings, streams, summary }, timing))
}

impl BenchReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per stream and method.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut out = String::from("stream,method,segments,precision,recall,f1,intra,inter,gap,compression_ratio\n");
        for s in &self.streams {
            for (name, m) in [("ees", &s.ees), ("threshold", &s.threshold), ("cluster", &s.cluster)] {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    s.id,
                    name,
                    m.segments,
                    opt(m.boundary.map(|b| b.precision)),
                    opt(m.boundary.map(|b| b.recall)),
                    opt(m.boundary.map(|b| b.f1)),
                    opt(m.cohesion.mean_intra),
                    opt(m.cohesion.mean_inter),
                    opt(m.cohesion.gap),
                    opt(m.compression_ratio),
                );
            }
        }
        out
    }
}
