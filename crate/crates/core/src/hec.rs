//! Hierarchical event consolidation.
//!
//! For each top-level event the descendant subtree is summarized bottom-up:
//! every level-1 segment is reduced by single-query cross-attention with its
//! essential (maximal-error) token as the query and the remaining tokens as
//! keys and values; at each higher level the segment's essential token
//! attends over the summaries of its child segments. The result at the top is
//! the abstract embedding. The coarse embedding is the mean of the top-level
//! tokens and the fine embedding is the maximal-error top-level token.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hierarchy::{EventHierarchy, EventSegment};
use crate::linalg;
use crate::stream::{StreamHeader, StreamWriter};

/// Learned `d x d` query/key/value projections, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Projections {
    pub dim: usize,
    pub query: Vec<f64>,
    pub key: Vec<f64>,
    pub value: Vec<f64>,
}

impl Projections {
    pub fn identity(dim: usize) -> Self {
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        Self { dim, query: eye.clone(), key: eye.clone(), value: eye }
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim * self.dim;
        if self.query.len() != n || self.key.len() != n || self.value.len() != n {
            return Err(Error::InvalidConfig(format!("projections must be {0}x{0}", self.dim)));
        }
        if self.query.iter().chain(&self.key).chain(&self.value).any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("projection matrices must be finite".into()));
        }
        Ok(())
    }
}

fn project(m: &[f64], dim: usize, x: &[f64]) -> Vec<f64> {
    m.chunks_exact(dim).map(|row| linalg::dot(row, x)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionConfig {
    /// Softmax temperature applied to the dot products.
    pub scale: f64,
    /// `None` means identity projections.
    pub projections: Option<Projections>,
}

impl AttentionConfig {
    /// Identity projections, scale `1/sqrt(d)`.
    pub fn identity(dim: usize) -> Self {
        Self { scale: 1.0 / (dim as f64).sqrt(), projections: None }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_projections(mut self, p: Projections) -> Self {
        self.projections = Some(p);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("attention scale {} must be positive", self.scale)));
        }
        if let Some(p) = &self.projections {
            p.validate()?;
        }
        Ok(())
    }
}

/// How the query token of each segment is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EssentialStrategy {
    /// Token with the highest recorded prediction error, earliest on ties.
    #[default]
    MaxError,
    /// Uniformly random token; deterministic in (seed, level, segment start).
    Random { seed: u64 },
    /// Token at position `(n - 1) / 2`.
    Middle,
}

impl EssentialStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::MaxError => "max_error",
            Self::Random { .. } => "random",
            Self::Middle => "middle",
        }
    }

    /// Position within `segment.tokens`.
    pub fn select(&self, segment: &EventSegment) -> Result<usize> {
        let n = segment.tokens.len();
        if n == 0 {
            return Err(Error::Empty("segment tokens"));
        }
        Ok(match *self {
            Self::MaxError => select_essential(segment)?,
            Self::Middle => (n - 1) / 2,
            Self::Random { seed } => {
                let mix = seed ^ (segment.level as u64).rotate_left(48) ^ segment.start.wrapping_mul(0x9E37_79B9_7F4A_7C15);
                ChaCha8Rng::seed_from_u64(mix).random_range(0..n)
            }
        })
    }
}

impl fmt::Display for EssentialStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EssentialStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max_error" => Ok(Self::MaxError),
            "random" => Ok(Self::Random { seed: 0 }),
            "middle" => Ok(Self::Middle),
            other => Err(Error::InvalidConfig(format!(
                "unknown essential strategy {other:?} (expected max_error, random or middle)"
            ))),
        }
    }
}

/// Position (within `segment.tokens`) of the maximal recorded error; the
/// earliest position wins ties.
pub fn select_essential(segment: &EventSegment) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, t) in segment.tokens.iter().enumerate() {
        if best.is_none_or(|(_, e)| t.error > e) {
            best = Some((i, t.error));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::Empty("segment tokens"))
}

/// Softmax weights of `query` against `keys`. Sums to 1.
pub fn attention_weights(query: &[f64], keys: &[&[f64]], cfg: &AttentionConfig) -> Result<Vec<f64>> {
    if keys.is_empty() {
        return Err(Error::Empty("attention keys"));
    }
    let d = query.len();
    for k in keys {
        if k.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: k.len() });
        }
    }
    let logits: Vec<f64> = match &cfg.projections {
        None => keys.iter().map(|k| cfg.scale * linalg::dot(query, k)).collect(),
        Some(p) => {
            if p.dim != d {
                return Err(Error::DimensionMismatch { expected: p.dim, got: d });
            }
            let q = project(&p.query, d, query);
            keys.iter().map(|k| cfg.scale * linalg::dot(&q, &project(&p.key, d, k))).collect()
        }
    };
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Single-query scaled dot-product attention.
pub fn cross_attention(
    query: &[f64],
    keys: &[&[f64]],
    values: &[&[f64]],
    cfg: &AttentionConfig,
) -> Result<Vec<f64>> {
    if keys.len() != values.len() {
        return Err(Error::InvalidConfig(format!(
            "{} keys but {} values",
            keys.len(),
            values.len()
        )));
    }
    let weights = attention_weights(query, keys, cfg)?;
    let d = query.len();
    let mut out = vec![0.0; d];
    for (w, v) in weights.iter().zip(values) {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: v.len() });
        }
        let projected;
        let v: &[f64] = match &cfg.projections {
            None => v,
            Some(p) => {
                projected = project(&p.value, d, v);
                &projected
            }
        };
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    Ok(out)
}

/// Essential token attends over the rest of its segment. A single-token
/// segment has nothing to attend to and returns its token.
pub fn intra_layer_aggregate(segment: &EventSegment, cfg: &AttentionConfig) -> Result<Vec<f64>> {
    intra_layer_aggregate_with(segment, cfg, EssentialStrategy::MaxError).map(|(v, _)| v)
}

fn intra_layer_aggregate_with(
    segment: &EventSegment,
    cfg: &AttentionConfig,
    strategy: EssentialStrategy,
) -> Result<(Vec<f64>, usize)> {
    let ess = strategy.select(segment)?;
    let tokens = &segment.tokens;
    if tokens.len() == 1 {
        return Ok((tokens[0].vector.clone(), ess));
    }
    let rest: Vec<&[f64]> = tokens
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != ess)
        .map(|(_, t)| t.vector.as_slice())
        .collect();
    Ok((cross_attention(&tokens[ess].vector, &rest, &rest, cfg)?, ess))
}

/// An upper-level essential token attends over lower-level summaries.
pub fn cross_layer_aggregate(
    essential_upper: &[f64],
    summaries_lower: &[Vec<f64>],
    cfg: &AttentionConfig,
) -> Result<Vec<f64>> {
    if summaries_lower.is_empty() {
        return Err(Error::Empty("lower-level summaries"));
    }
    let refs: Vec<&[f64]> = summaries_lower.iter().map(Vec::as_slice).collect();
    cross_attention(essential_upper, &refs, &refs, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSummary {
    pub start_frame: u64,
    pub end_frame: u64,
    #[serde(rename = "abstract")]
    pub abstract_: Vec<f64>,
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
}

/// One essential token used while consolidating an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EssentialRef {
    pub level: usize,
    /// Token ordinal at `level`.
    pub token: u64,
    /// Last frame covered by the token.
    pub frame: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConsolidationResult {
    pub summaries: Vec<EventSummary>,
    /// Per summary, every essential token used, ordered by level then time.
    pub provenance: Vec<Vec<EssentialRef>>,
}

impl ConsolidationResult {
    pub fn len(&self) -> usize {
        self.summaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.summaries.is_empty()
    }

    /// `abstract, coarse, fine` per event, in event order.
    pub fn output_vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.summaries
            .iter()
            .flat_map(|s| [s.abstract_.as_slice(), s.coarse.as_slice(), s.fine.as_slice()])
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Event<'a> {
            span: [u64; 2],
            #[serde(rename = "abstract")]
            abstract_: &'a [f64],
            coarse: &'a [f64],
            fine: &'a [f64],
            essential_frames: Vec<u64>,
            essentials: &'a [EssentialRef],
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            events: Vec<Event<'a>>,
        }
        let events = self
            .summaries
            .iter()
            .zip(&self.provenance)
            .map(|(s, p)| Event {
                span: [s.start_frame, s.end_frame],
                abstract_: &s.abstract_,
                coarse: &s.coarse,
                fine: &s.fine,
                essential_frames: p.iter().map(|e| e.frame).collect(),
                essentials: p,
            })
            .collect();
        serde_json::to_string_pretty(&Doc { events }).map_err(|e| Error::Malformed(e.to_string()))
    }

    /// Writes `3 * len()` rows as an `EMBS` stream.
    pub fn write_embs<W: Write>(&self, out: W, fps: Option<(u32, u32)>) -> Result<W> {
        let Some(first) = self.summaries.first() else {
            return Err(Error::Empty("consolidation result"));
        };
        let mut header = StreamHeader::bounded(first.coarse.len() as u32, 3 * self.len() as u64);
        if let Some((n, d)) = fps {
            header = header.with_fps(n, d);
        }
        let mut writer = StreamWriter::new(out, header)?;
        for v in self.output_vectors() {
            let row: Vec<f32> = v.iter().map(|&x| x as f32).collect();
            writer.write_row(&row)?;
        }
        writer.finish()
    }
}

/// Consolidation with a configurable query-selection strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct Consolidator {
    pub attention: AttentionConfig,
    pub strategy: EssentialStrategy,
}

impl Consolidator {
    pub fn new(attention: AttentionConfig) -> Self {
        Self { attention, strategy: EssentialStrategy::MaxError }
    }

    pub fn with_strategy(mut self, strategy: EssentialStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    fn summarize(
        &self,
        h: &EventHierarchy,
        segment: &EventSegment,
        trail: &mut Vec<EssentialRef>,
    ) -> Result<Vec<f64>> {
        if segment.tokens.is_empty() {
            return Err(Error::InvalidHierarchy(format!(
                "level-{} segment at frames {}..={} carries no tokens",
                segment.level, segment.start_frame, segment.end_frame
            )));
        }
        if segment.level == 1 {
            let (v, ess) = intra_layer_aggregate_with(segment, &self.attention, self.strategy)?;
            let t = &segment.tokens[ess];
            trail.push(EssentialRef { level: 1, token: t.ordinal, frame: t.time });
            return Ok(v);
        }
        let children = h.children(segment)?;
        let lower = children
            .iter()
            .map(|c| self.summarize(h, c, trail))
            .collect::<Result<Vec<_>>>()?;
        let ess = self.strategy.select(segment)?;
        let t = &segment.tokens[ess];
        trail.push(EssentialRef { level: segment.level, token: t.ordinal, frame: t.time });
        cross_layer_aggregate(&t.vector, &lower, &self.attention)
    }

    pub fn consolidate_event(&self, h: &EventHierarchy, top: &EventSegment) -> Result<(EventSummary, Vec<EssentialRef>)> {
        self.attention.validate()?;
        if !top.finalized {
            return Err(Error::InvalidHierarchy("segment is not finalized".into()));
        }
        if top.level != h.depth() || !h.top_level().iter().any(|s| s.start == top.start && s.end == top.end) {
            return Err(Error::InvalidHierarchy(format!(
                "level-{} segment at frames {}..={} is not a top-level segment of this hierarchy",
                top.level, top.start_frame, top.end_frame
            )));
        }
        let mut trail = Vec::new();
        let abstract_ = self.summarize(h, top, &mut trail)?;
        trail.sort_by_key(|e| (e.level, e.frame));

        let d = top.tokens[0].vector.len();
        let coarse = linalg::mean(top.tokens.iter().map(|t| t.vector.as_slice()), d);
        let fine = top.tokens[select_essential(top)?].vector.clone();
        Ok((
            EventSummary { start_frame: top.start_frame, end_frame: top.end_frame, abstract_, coarse, fine },
            trail,
        ))
    }

    pub fn consolidate_all(&self, h: &EventHierarchy) -> Result<ConsolidationResult> {
        let mut tops: Vec<&EventSegment> = h.top_level().iter().collect();
        tops.sort_by_key(|s| s.start_frame);
        let mut result = ConsolidationResult::default();
        for top in tops {
            let (summary, trail) = self.consolidate_event(h, top)?;
            result.summaries.push(summary);
            result.provenance.push(trail);
        }
        Ok(result)
    }
}

pub fn consolidate_event(h: &EventHierarchy, top: &EventSegment, cfg: &AttentionConfig) -> Result<EventSummary> {
    Consolidator::new(cfg.clone()).consolidate_event(h, top).map(|(s, _)| s)
}

pub fn consolidate_all(h: &EventHierarchy, cfg: &AttentionConfig) -> Result<ConsolidationResult> {
    Consolidator::new(cfg.clone()).consolidate_all(h)
}
