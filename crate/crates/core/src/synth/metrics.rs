//! Boundary accuracy and embedding cohesion.

use serde::{Deserialize, Serialize};

use super::baselines::Span;
use super::generator::GroundTruth;
use crate::linalg;
use crate::stream::FrameEmbedding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Greedy one-to-one matching: predicted boundaries in ascending order each
/// take the nearest unmatched true boundary within `tolerance` frames
/// (earlier on ties).
pub fn boundary_f1_frames(predicted: &[u64], truth: &[u64], tolerance: u64) -> BoundaryScore {
    if predicted.is_empty() && truth.is_empty() {
        return BoundaryScore { precision: 1.0, recall: 1.0, f1: 1.0 };
    }
    let mut pred = predicted.to_vec();
    pred.sort_unstable();
    let mut used = vec![false; truth.len()];
    let mut hits = 0usize;
    for p in pred {
        let mut best: Option<(u64, usize)> = None;
        for (i, &t) in truth.iter().enumerate() {
            let d = p.abs_diff(t);
            if used[i] || d > tolerance {
                continue;
            }
            if best.is_none_or(|(bd, bi)| d < bd || (d == bd && t < truth[bi])) {
                best = Some((d, i));
            }
        }
        if let Some((_, i)) = best {
            used[i] = true;
            hits += 1;
        }
    }
    let ratio = |n: usize| if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    let precision = ratio(predicted.len());
    let recall = if truth.is_empty() { 0.0 } else { ratio(truth.len()) };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    BoundaryScore { precision, recall, f1 }
}

pub fn boundary_f1(predicted: &[u64], truth: &GroundTruth, tolerance: u64) -> BoundaryScore {
    boundary_f1_frames(predicted, &truth.boundary_frames, tolerance)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cohesion {
    /// Mean pairwise cosine inside segments, averaged over segments of two or
    /// more frames.
    pub mean_intra: Option<f64>,
    /// Mean cross-pair cosine between adjacent segments, averaged over
    /// adjacent pairs.
    pub mean_inter: Option<f64>,
    pub gap: Option<f64>,
}

impl Cohesion {
    /// Strictly larger gap; a missing gap never wins.
    pub fn gap_exceeds(&self, other: &Cohesion) -> bool {
        match (self.gap, other.gap) {
            (Some(a), Some(b)) => a > b,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

pub fn cohesion_metrics(frames: &[FrameEmbedding], segments: &[Span]) -> Cohesion {
    let unit: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| {
            let v = linalg::to_f64(&f.vector);
            let n = linalg::norm(&v);
            if n > 0.0 {
                v.into_iter().map(|x| x / n).collect()
            } else {
                v
            }
        })
        .collect();
    let range = |s: &Span| &unit[s.start as usize..=s.end as usize];

    let mut intra = Vec::new();
    for s in segments {
        let r = range(s);
        if r.len() < 2 {
            continue;
        }
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..r.len() {
            for j in i + 1..r.len() {
                sum += linalg::dot(&r[i], &r[j]);
                n += 1;
            }
        }
        intra.push(sum / n as f64);
    }
    let mut inter = Vec::new();
    for w in segments.windows(2) {
        let (a, b) = (range(&w[0]), range(&w[1]));
        let sum: f64 = a.iter().flat_map(|x| b.iter().map(move |y| linalg::dot(x, y))).sum();
        inter.push(sum / (a.len() * b.len()) as f64);
    }
    let avg = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let (mean_intra, mean_inter) = (avg(&intra), avg(&inter));
    let gap = mean_intra.zip(mean_inter).map(|(a, b)| a - b);
    Cohesion { mean_intra, mean_inter, gap }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_examples() {
        let s = boundary_f1_frames(&[10, 31], &[10, 30], 2);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let s = boundary_f1_frames(&[], &[10], 2);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = boundary_f1_frames(&[], &[], 2);
        assert_eq!(s.f1, 1.0);
        let s = boundary_f1_frames(&[5], &[], 2);
        assert_eq!((s.precision, s.f1), (0.0, 0.0));
    }

    #[test]
    fn one_to_one_matching() {
        // both predictions near one truth boundary: only one may match
        let s = boundary_f1_frames(&[9, 11], &[10], 2);
        assert_eq!(s.precision, 0.5);
        assert_eq!(s.recall, 1.0);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
        let s = boundary_f1_frames(&[13], &[10], 2);
        assert_eq!(s.f1, 0.0);
    }

    #[test]
    fn cohesion_orthogonal_blocks() {
        let rows = [[1.0f32, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        let frames: Vec<FrameEmbedding> =
            rows.iter().enumerate().map(|(i, r)| FrameEmbedding::new(i as u64, r.to_vec())).collect();
        let c = cohesion_metrics(&frames, &[Span { start: 0, end: 1 }, Span { start: 2, end: 3 }]);
        assert_eq!(c.mean_intra, Some(1.0));
        assert_eq!(c.mean_inter, Some(0.0));
        assert_eq!(c.gap, Some(1.0));
        let single = cohesion_metrics(&frames, &[Span { start: 0, end: 3 }]);
        assert_eq!(single.mean_inter, None);
        assert_eq!(single.gap, None);
        assert!(c.gap_exceeds(&single));
        assert!(!single.gap_exceeds(&c));
    }
}
