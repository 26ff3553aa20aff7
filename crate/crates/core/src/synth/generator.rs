//! Seeded synthetic embedding streams with planted event structure.
//!
//! A frame in planted segment `s` starting at frame `t0` is
//! `normalize(c_s + drift_rate * (t - t0) * u_s + n_t)` where `c_s` is the
//! segment centroid, `u_s` a unit drift direction orthogonal to it and
//! `n_t ~ N(0, noise_sigma^2 / d * I)`, so `noise_sigma` is the expected noise
//! norm independent of `d`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::stream::FrameEmbedding;

pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centroid {
    /// Drawn uniformly on the sphere from `SynthSpec::seed`. Segments that share an
    /// id share the centroid (a revisited scene).
    Drawn(u32),
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub length: usize,
    pub centroid: Centroid,
    pub noise_sigma: f64,
    pub drift_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dim: usize,
    pub segments: Vec<SegmentSpec>,
    pub seed: u64,
    /// Upper bound on the cosine between distinct drawn centroids.
    pub min_centroid_separation: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Frames at which a new planted segment begins (frame 0 excluded).
    pub boundary_frames: Vec<u64>,
    /// Planted segment index of every frame.
    pub segment_ids: Vec<u32>,
}

impl GroundTruth {
    pub fn from_lengths(lengths: &[usize]) -> Self {
        let mut boundary_frames = Vec::new();
        let mut segment_ids = Vec::new();
        for (i, &len) in lengths.iter().enumerate() {
            if i > 0 {
                boundary_frames.push(segment_ids.len() as u64);
            }
            segment_ids.extend(std::iter::repeat_n(i as u32, len));
        }
        Self { boundary_frames, segment_ids }
    }

    pub fn frame_count(&self) -> usize {
        self.segment_ids.len()
    }

    pub fn segment_count(&self) -> usize {
        if self.segment_ids.is_empty() {
            0
        } else {
            self.boundary_frames.len() + 1
        }
    }

    /// Fails if boundaries are not strictly increasing inside the stream.
    pub fn validate(&self) -> Result<()> {
        let n = self.segment_ids.len() as u64;
        let ok = self.boundary_frames.windows(2).all(|w| w[0] < w[1])
            && self.boundary_frames.iter().all(|&b| b > 0 && b < n);
        if ok {
            Ok(())
        } else {
            Err(Error::Malformed("ground-truth boundaries must be strictly increasing within the stream".into()))
        }
    }
}

pub(crate) fn random_unit<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = linalg::norm(&v);
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit vector orthogonal to `axis` (or any unit vector when `dim == 1`).
pub(crate) fn random_orthogonal<R: Rng>(axis: &[f64], rng: &mut R) -> Vec<f64> {
    let dim = axis.len();
    let axis_n = linalg::norm(axis);
    for _ in 0..64 {
        let mut v = random_unit(dim, rng);
        if axis_n > 1e-12 && dim > 1 {
            let p = linalg::dot(&v, axis) / (axis_n * axis_n);
            v.iter_mut().zip(axis).for_each(|(x, a)| *x -= p * a);
        }
        let n = linalg::norm(&v);
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
    random_unit(dim, rng)
}

/// Draws `count` unit centroids with pairwise cosine at most `max_cos`,
/// also respecting `existing`.
pub(crate) fn draw_centroids<R: Rng>(
    dim: usize,
    count: usize,
    max_cos: f64,
    existing: &[Vec<f64>],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut attempts = 0;
        let c = loop {
            let c = random_unit(dim, rng);
            let ok = existing
                .iter()
                .chain(&out)
                .all(|o| linalg::cosine(o, &c).is_none_or(|cos| cos <= max_cos));
            if ok {
                break c;
            }
            attempts += 1;
            if attempts >= MAX_REJECTIONS {
                return Err(Error::UnsatisfiableSeparation { separation: max_cos, attempts });
            }
        };
        out.push(c);
    }
    Ok(out)
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("synthetic dim must be at least 1".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.length == 0 {
                return Err(Error::InvalidConfig(format!("segment {i} has zero length")));
            }
            if !(s.noise_sigma >= 0.0 && s.noise_sigma.is_finite()) {
                return Err(Error::InvalidConfig(format!("segment {i} noise_sigma must be >= 0")));
            }
            if !(s.drift_rate >= 0.0 && s.drift_rate.is_finite()) {
                return Err(Error::InvalidConfig(format!("segment {i} drift_rate must be >= 0")));
            }
            if let Centroid::Explicit(c) = &s.centroid {
                if c.len() != self.dim {
                    return Err(Error::DimensionMismatch { expected: self.dim, got: c.len() });
                }
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Resolved centroid of every segment.
    pub fn centroids(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let explicit: Vec<Vec<f64>> = self
            .segments
            .iter()
            .filter_map(|s| match &s.centroid {
                Centroid::Explicit(c) => Some(c.clone()),
                Centroid::Drawn(_) => None,
            })
            .collect();
        let mut ids: Vec<u32> = Vec::new();
        for s in &self.segments {
            if let Centroid::Drawn(id) = s.centroid {
                if !ids.contains(&id) {
                    ids.push(id);
                }
            }
        }
        let drawn = draw_centroids(self.dim, ids.len(), self.min_centroid_separation, &explicit, &mut rng)?;
        Ok(self
            .segments
            .iter()
            .map(|s| match &s.centroid {
                Centroid::Explicit(c) => c.clone(),
                Centroid::Drawn(id) => drawn[ids.iter().position(|x| x == id).unwrap()].clone(),
            })
            .collect())
    }
}

pub fn generate_stream(spec: &SynthSpec) -> Result<(Vec<FrameEmbedding>, GroundTruth)> {
    let centroids = spec.centroids()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let d = spec.dim;
    let mut frames = Vec::with_capacity(spec.frame_count());
    for (seg, centroid) in spec.segments.iter().zip(&centroids) {
        let direction = random_orthogonal(centroid, &mut rng);
        let std = seg.noise_sigma / (d as f64).sqrt();
        for step in 0..seg.length {
            let shift = seg.drift_rate * step as f64;
            let mut v: Vec<f64> = centroid.iter().zip(&direction).map(|(c, u)| c + shift * u).collect();
            if std > 0.0 {
                for x in &mut v {
                    *x += std * rng.sample::<f64, _>(StandardNormal);
                }
            }
            let unit = crate::stream::normalize_frame(&v)?;
            let index = frames.len() as u64;
            frames.push(FrameEmbedding::new(index, unit.iter().map(|&x| x as f32).collect()));
        }
    }
    let lengths: Vec<usize> = spec.segments.iter().map(|s| s.length).collect();
    Ok((frames, GroundTruth::from_lengths(&lengths)))
}

/// Two-level planted structure: chapters made of scenes whose centroids are
/// perturbations of the chapter centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedSpec {
    pub dim: usize,
    /// Scene lengths, grouped by chapter.
    pub chapters: Vec<Vec<usize>>,
    /// Norm of the offset from chapter centroid to scene centroid.
    pub scene_spread: f64,
    pub noise_sigma: f64,
    pub drift_rate: f64,
    pub seed: u64,
    pub min_centroid_separation: f64,
}

impl NestedSpec {
    pub fn to_flat(&self) -> Result<SynthSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2);
        let chapter_centroids =
            draw_centroids(self.dim, self.chapters.len(), self.min_centroid_separation, &[], &mut rng)?;
        let mut segments = Vec::new();
        for (scenes, chapter) in self.chapters.iter().zip(&chapter_centroids) {
            for &length in scenes {
                let u = random_orthogonal(chapter, &mut rng);
                let c: Vec<f64> = chapter.iter().zip(&u).map(|(a, b)| a + self.scene_spread * b).collect();
                let n = linalg::norm(&c);
                segments.push(SegmentSpec {
                    length,
                    centroid: Centroid::Explicit(c.into_iter().map(|x| x / n).collect()),
                    noise_sigma: self.noise_sigma,
                    drift_rate: self.drift_rate,
                });
            }
        }
        Ok(SynthSpec {
            dim: self.dim,
            segments,
            seed: self.seed,
            min_centroid_separation: self.min_centroid_separation,
        })
    }

    pub fn chapter_truth(&self) -> GroundTruth {
        let lengths: Vec<usize> = self.chapters.iter().map(|c| c.iter().sum()).collect();
        GroundTruth::from_lengths(&lengths)
    }
}

/// Frames plus scene-level and chapter-level truth.
pub fn generate_nested(spec: &NestedSpec) -> Result<(Vec<FrameEmbedding>, GroundTruth, GroundTruth)> {
    let (frames, scenes) = generate_stream(&spec.to_flat()?)?;
    Ok((frames, scenes, spec.chapter_truth()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn explicit(c: &[f64], length: usize) -> SegmentSpec {
        SegmentSpec { length, centroid: Centroid::Explicit(c.to_vec()), noise_sigma: 0.0, drift_rate: 0.0 }
    }

    #[test]
    fn noiseless_two_segments() {
        let spec = SynthSpec {
            dim: 3,
            segments: vec![explicit(&[1.0, 0.0, 0.0], 3), explicit(&[0.0, 1.0, 0.0], 3)],
            seed: 1,
            min_centroid_separation: 0.2,
        };
        let (frames, truth) = generate_stream(&spec).unwrap();
        let rows: Vec<Vec<f32>> = frames.iter().map(|f| f.vector.clone()).collect();
        assert_eq!(rows[..3], vec![vec![1.0, 0.0, 0.0]; 3][..]);
        assert_eq!(rows[3..], vec![vec![0.0, 1.0, 0.0]; 3][..]);
        assert_eq!(truth.boundary_frames, vec![3]);
        assert_eq!(truth.segment_ids, vec![0, 0, 0, 1, 1, 1]);

        let other = SynthSpec { seed: 999, ..spec };
        assert_eq!(generate_stream(&other).unwrap().0, frames);
    }

    #[test]
    fn seeds_control_drawn_centroids() {
        let seg = |id| SegmentSpec { length: 2, centroid: Centroid::Drawn(id), noise_sigma: 0.0, drift_rate: 0.0 };
        let spec = SynthSpec { dim: 8, segments: vec![seg(0), seg(1), seg(0)], seed: 3, min_centroid_separation: 0.3 };
        let a = generate_stream(&spec).unwrap().0;
        assert_eq!(a, generate_stream(&spec).unwrap().0);
        assert_eq!(a[0], FrameEmbedding::new(0, a[4].vector.clone()));
        let b = generate_stream(&SynthSpec { seed: 4, ..spec.clone() }).unwrap().0;
        assert_ne!(a[0].vector, b[0].vector);
        let c = spec.centroids().unwrap();
        assert!(linalg::cosine(&c[0], &c[1]).unwrap() <= 0.3);
    }

    #[test]
    fn unsatisfiable_separation() {
        let seg = |id| SegmentSpec { length: 1, centroid: Centroid::Drawn(id), noise_sigma: 0.0, drift_rate: 0.0 };
        // three directions on a line can't be pairwise at cos <= -0.9
        let spec = SynthSpec { dim: 1, segments: vec![seg(0), seg(1), seg(2)], seed: 0, min_centroid_separation: -0.9 };
        assert!(matches!(generate_stream(&spec), Err(Error::UnsatisfiableSeparation { .. })));
    }

    #[test]
    fn invalid_specs() {
        let spec = SynthSpec { dim: 2, segments: vec![explicit(&[1.0, 0.0], 0)], seed: 0, min_centroid_separation: 0.2 };
        assert!(generate_stream(&spec).is_err());
        let spec = SynthSpec { dim: 2, segments: vec![explicit(&[1.0], 2)], seed: 0, min_centroid_separation: 0.2 };
        assert!(generate_stream(&spec).is_err());
    }

    #[test]
    fn drift_moves_frames_away() {
        let mut s = explicit(&[1.0, 0.0, 0.0, 0.0], 30);
        s.drift_rate = 0.05;
        let spec = SynthSpec { dim: 4, segments: vec![s], seed: 5, min_centroid_separation: 0.2 };
        let (frames, _) = generate_stream(&spec).unwrap();
        let first = linalg::to_f64(&frames[0].vector);
        let cos_near = linalg::cosine(&first, &linalg::to_f64(&frames[1].vector)).unwrap();
        let cos_far = linalg::cosine(&first, &linalg::to_f64(&frames[29].vector)).unwrap();
        assert!(cos_far < cos_near);
    }

    #[test]
    fn nested_truth() {
        let spec = NestedSpec {
            dim: 16,
            chapters: vec![vec![5, 5], vec![4, 6, 3]],
            scene_spread: 0.5,
            noise_sigma: 0.0,
            drift_rate: 0.0,
            seed: 2,
            min_centroid_separation: 0.2,
        };
        let (frames, scenes, chapters) = generate_nested(&spec).unwrap();
        assert_eq!(frames.len(), 23);
        assert_eq!(scenes.boundary_frames, vec![5, 10, 14, 20]);
        assert_eq!(chapters.boundary_frames, vec![10]);
    }
}
