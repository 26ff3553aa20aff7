//! Reference segmenters for the benchmark.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::stream::FrameEmbedding;

pub const KMEANS_MAX_ITER: usize = 100;
pub const DEFAULT_SIM_THRESHOLD: f64 = 0.6;

/// Inclusive frame span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: u64,
    pub end: u64,
}

impl Span {
    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Start frames of every span after the first.
pub fn span_boundaries(spans: &[Span]) -> Vec<u64> {
    spans.iter().skip(1).map(|s| s.start).collect()
}

/// Maximal runs of equal labels.
pub fn spans_from_labels(labels: &[usize]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            spans.push(Span { start: start as u64, end: i as u64 - 1 });
            start = i;
        }
    }
    spans
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding. Empty clusters keep their
/// previous centroid.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<KMeansFit> {
    if k == 0 || k > points.len() {
        return Err(Error::InvalidConfig(format!("k = {k} must be in 1..={}", points.len())));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let idx = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(&mut rng),
            // every point already coincides with a centroid
            Err(_) => rng.random_range(0..points.len()),
        };
        centroids.push(points[idx].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *c = s.into_iter().map(|x| x / n as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(KMeansFit { labels, centroids, iterations })
}

/// k-means over frames; runs of equal cluster label become segments.
pub fn baseline_cluster_segment(frames: &[FrameEmbedding], k: usize, seed: u64) -> Result<Vec<Span>> {
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let points: Vec<Vec<f64>> = frames.iter().map(|f| linalg::to_f64(&f.vector)).collect();
    let fit = kmeans(&points, k, seed, KMEANS_MAX_ITER)?;
    Ok(spans_from_labels(&fit.labels))
}

/// Cuts between consecutive frames whose cosine similarity drops below
/// `sim_threshold`.
pub fn baseline_threshold_segment(frames: &[FrameEmbedding], sim_threshold: f64) -> Result<Vec<Span>> {
    if !(-1.0..=1.0).contains(&sim_threshold) {
        return Err(Error::InvalidConfig(format!("similarity threshold {sim_threshold} outside [-1, 1]")));
    }
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let mut spans = Vec::new();
    let mut start = 0u64;
    let mut prev = linalg::to_f64(&frames[0].vector);
    for (t, f) in frames.iter().enumerate().skip(1) {
        let v = linalg::to_f64(&f.vector);
        let sim = linalg::cosine(&prev, &v).unwrap_or(0.0);
        if sim < sim_threshold {
            spans.push(Span { start, end: t as u64 - 1 });
            start = t as u64;
        }
        prev = v;
    }
    spans.push(Span { start, end: frames.len() as u64 - 1 });
    Ok(spans)
}
