//! Benchmark corpora and the on-disk manifest.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::generator::{generate_stream, Centroid, GroundTruth, NestedSpec, SegmentSpec, SynthSpec};
use crate::error::{Error, Result};
use crate::stream::{FrameEmbedding, StreamHeader, StreamReader, StreamWriter};

pub const DEFAULT_STREAMS: usize = 100;
pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_FRAMES: usize = 120;
pub const DEFAULT_SEPARATION: f64 = 0.2;
pub const CLEAN_SIGMA: f64 = 0.05;
pub const DRIFT_SIGMA: f64 = 0.7;
pub const DRIFT_RATE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    /// Low-noise streams with 4 to 8 distinct scenes.
    Clean,
    /// Noisy, drifting streams of 6 scenes drawn from 4 recurring centroids.
    Drift,
    /// Scenes nested in chapters.
    Nested,
}

impl std::str::FromStr for CorpusKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Self::Clean),
            "drift" => Ok(Self::Drift),
            "nested" => Ok(Self::Nested),
            other => Err(Error::InvalidConfig(format!("unknown corpus kind {other:?} (clean, drift, nested)"))),
        }
    }
}

impl std::fmt::Display for CorpusKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Clean => "clean",
            Self::Drift => "drift",
            Self::Nested => "nested",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub kind: CorpusKind,
    pub streams: usize,
    pub dim: usize,
    pub frames: usize,
    pub seed: u64,
    pub separation: f64,
    pub noise_sigma: f64,
    pub drift_rate: f64,
}

impl CorpusParams {
    pub fn new(kind: CorpusKind, seed: u64) -> Self {
        let (noise_sigma, drift_rate) = match kind {
            CorpusKind::Clean => (CLEAN_SIGMA, 0.0),
            CorpusKind::Drift => (DRIFT_SIGMA, DRIFT_RATE),
            CorpusKind::Nested => (CLEAN_SIGMA, 0.0),
        };
        let frames = if kind == CorpusKind::Nested { 100 } else { DEFAULT_FRAMES };
        Self {
            kind,
            streams: DEFAULT_STREAMS,
            dim: DEFAULT_DIM,
            frames,
            seed,
            separation: DEFAULT_SEPARATION,
            noise_sigma,
            drift_rate,
        }
    }

    /// Per-stream seeds, derived from the corpus seed.
    fn stream_seeds(&self) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.streams).map(|_| rng.random()).collect()
    }

    pub fn specs(&self) -> Result<Vec<SynthSpec>> {
        self.stream_seeds()
            .into_iter()
            .map(|seed| match self.kind {
                CorpusKind::Clean => self.clean_spec(seed),
                CorpusKind::Drift => self.drift_spec(seed),
                CorpusKind::Nested => self.nested_spec(seed).to_flat(),
            })
            .collect()
    }

    pub fn nested_specs(&self) -> Vec<NestedSpec> {
        self.stream_seeds().into_iter().map(|seed| self.nested_spec(seed)).collect()
    }

    fn segment(&self, length: usize, id: u32) -> SegmentSpec {
        SegmentSpec {
            length,
            centroid: Centroid::Drawn(id),
            noise_sigma: self.noise_sigma,
            drift_rate: self.drift_rate,
        }
    }

    fn clean_spec(&self, seed: u64) -> Result<SynthSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        let count = rng.random_range(4..=8usize).min(self.frames / 8).max(1);
        let lengths = random_lengths(self.frames, count, 8, &mut rng)?;
        Ok(SynthSpec {
            dim: self.dim,
            segments: lengths.iter().enumerate().map(|(i, &l)| self.segment(l, i as u32)).collect(),
            seed,
            min_centroid_separation: self.separation,
        })
    }

    fn drift_spec(&self, seed: u64) -> Result<SynthSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        let lengths = random_lengths(self.frames, 6, 12, &mut rng)?;
        let mut ids: Vec<u32> = Vec::with_capacity(6);
        for _ in 0..6 {
            let id = loop {
                let id = rng.random_range(0..4u32);
                if ids.last() != Some(&id) {
                    break id;
                }
            };
            ids.push(id);
        }
        Ok(SynthSpec {
            dim: self.dim,
            segments: lengths.iter().zip(ids).map(|(&l, id)| self.segment(l, id)).collect(),
            seed,
            min_centroid_separation: self.separation,
        })
    }

    fn nested_spec(&self, seed: u64) -> NestedSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        let chapters = rng.random_range(3..=4usize);
        let chapter_lengths = random_lengths(self.frames, chapters, 16, &mut rng).unwrap_or_else(|_| vec![self.frames]);
        let scenes = chapter_lengths
            .into_iter()
            .map(|len| {
                let n = rng.random_range(2..=3usize).min(len / 6).max(1);
                random_lengths(len, n, 6, &mut rng).unwrap_or_else(|_| vec![len])
            })
            .collect();
        NestedSpec {
            dim: self.dim,
            chapters: scenes,
            scene_spread: 1.0,
            noise_sigma: self.noise_sigma,
            drift_rate: self.drift_rate,
            seed,
            min_centroid_separation: self.separation,
        }
    }

    pub fn generate(&self) -> Result<Vec<CorpusStream>> {
        let specs = self.specs()?;
        specs
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let (frames, truth) = generate_stream(spec)?;
                Ok(CorpusStream { id: stream_id(i), frames, truth: Some(truth) })
            })
            .collect()
    }
}

pub fn stream_id(i: usize) -> String {
    format!("stream_{i:03}")
}

/// `count` lengths, each at least `min`, summing to `total`.
pub fn random_lengths<R: Rng>(total: usize, count: usize, min: usize, rng: &mut R) -> Result<Vec<usize>> {
    if count == 0 || count * min > total {
        return Err(Error::InvalidConfig(format!("cannot split {total} frames into {count} segments of at least {min}")));
    }
    let mut lengths = vec![min; count];
    for _ in 0..total - count * min {
        lengths[rng.random_range(0..count)] += 1;
    }
    Ok(lengths)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStream {
    pub id: String,
    pub frames: Vec<FrameEmbedding>,
    pub truth: Option<GroundTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// EMBS file, relative to the manifest.
    pub stream: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<CorpusParams>,
    pub streams: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes one EMBS and one truth JSON per stream plus `manifest.json`.
pub fn write_corpus(dir: &Path, streams: &[CorpusStream], params: Option<&CorpusParams>) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(streams.len());
    for s in streams {
        let dim = s.frames.first().map_or(0, |f| f.dim()) as u32;
        let stream = PathBuf::from(format!("{}.embs", s.id));
        let mut w = StreamWriter::new(BufWriter::new(File::create(dir.join(&stream))?), StreamHeader::bounded(dim, s.frames.len() as u64))?;
        for f in &s.frames {
            w.write_frame(f)?;
        }
        w.finish()?;
        let truth = match &s.truth {
            Some(t) => {
                let p = PathBuf::from(format!("{}.truth.json", s.id));
                fs::write(dir.join(&p), serde_json::to_vec(t)?)?;
                Some(p)
            }
            None => None,
        };
        entries.push(ManifestEntry { id: s.id.clone(), stream, truth });
    }
    let manifest = Manifest { version: 1, params: params.cloned(), streams: entries };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let m: Manifest = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if m.version != 1 {
        return Err(Error::UnsupportedVersion(m.version));
    }
    Ok(m)
}

pub fn load_corpus(manifest_path: &Path) -> Result<Vec<CorpusStream>> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .streams
        .iter()
        .map(|e| {
            let reader = StreamReader::new(BufReader::new(File::open(base.join(&e.stream))?))?;
            let frames = reader.collect::<Result<Vec<_>>>()?;
            let truth = match &e.truth {
                Some(p) => {
                    let t: GroundTruth = serde_json::from_reader(BufReader::new(File::open(base.join(p))?))?;
                    t.validate()?;
                    Some(t)
                }
                None => None,
            };
            Ok(CorpusStream { id: e.id.clone(), frames, truth })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lengths_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = random_lengths(120, 6, 12, &mut rng).unwrap();
        assert_eq!(l.iter().sum::<usize>(), 120);
        assert!(l.iter().all(|&x| x >= 12));
        assert!(random_lengths(10, 3, 4, &mut rng).is_err());
    }

    #[test]
    fn corpora_shapes() {
        for kind in [CorpusKind::Clean, CorpusKind::Drift, CorpusKind::Nested] {
            let mut p = CorpusParams::new(kind, 11);
            p.streams = 5;
            let c = p.generate().unwrap();
            assert_eq!(c.len(), 5);
            for s in &c {
                assert_eq!(s.frames.len(), p.frames);
                assert_eq!(s.truth.as_ref().unwrap().frame_count(), p.frames);
            }
            assert_eq!(c, p.generate().unwrap());
        }
    }

    #[test]
    fn drift_revisits_without_adjacent_repeat() {
        let mut p = CorpusParams::new(CorpusKind::Drift, 1);
        p.streams = 20;
        for spec in p.specs().unwrap() {
            assert_eq!(spec.segments.len(), 6);
            for w in spec.segments.windows(2) {
                assert_ne!(w[0].centroid, w[1].centroid);
            }
        }
    }

    #[test]
    fn manifest_round_trip() {
        let dir = std::env::temp_dir().join(format!("ees-corpus-{}", std::process::id()));
        let mut p = CorpusParams::new(CorpusKind::Clean, 2);
        p.streams = 3;
        let c = p.generate().unwrap();
        let path = write_corpus(&dir, &c, Some(&p)).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), c);
        assert_eq!(read_manifest(&path).unwrap().params, Some(p));
        fs::remove_dir_all(dir).unwrap();
    }
}
