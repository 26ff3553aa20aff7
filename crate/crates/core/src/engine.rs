//! The causal streaming segmentation loop.
//!
//! Every level keeps an open context (the tokens since its last boundary,
//! capped at `window_cap`), the latent abstracted from that context and the
//! prediction for its next incoming token. A token arriving at level `l` is
//! scored against the stored prediction with the cosine error; when the error
//! exceeds `thresholds[l-1]` the open level-`l` segment is finalized, a new
//! context starts with the arriving token, and the finalized segment's latent
//! is pushed to level `l+1`, where the same check runs. The cascade is handled
//! bottom-up inside one `ingest_frame` call. The top level never promotes.
//!
//! Level-1 tokens are the unit-normalized frames themselves.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::hierarchy::{EventHierarchy, EventSegment, LatentToken};
use crate::linalg;
use crate::predictors::{PredictorConfig, PredictorKind, PredictorState};
use crate::stream::FrameEmbedding;

pub const DEFAULT_LEVELS: usize = 3;
pub const DEFAULT_THRESHOLD: f64 = 0.4;
pub const DEFAULT_WINDOW_CAP: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct EesConfig {
    pub levels: usize,
    pub thresholds: Vec<f64>,
    pub window_cap: usize,
    pub predictor: PredictorConfig,
    pub online_learning: bool,
    /// Keep finalized segments in the engine. Turn off for unbounded streams
    /// whose segments go straight to a sink.
    pub retain_hierarchy: bool,
    /// Keep per-token payloads in segments (needed for consolidation).
    pub retain_tokens: bool,
}

impl EesConfig {
    /// Three levels, threshold 0.4 everywhere, window cap 32, persistence predictor.
    pub fn new(dim: usize) -> Self {
        Self::with_predictor(dim, PredictorKind::MeanPoolIdentity)
    }

    pub fn with_predictor(dim: usize, kind: PredictorKind) -> Self {
        let mut predictor = PredictorConfig::new(kind, dim, DEFAULT_LEVELS);
        predictor.window_cap = DEFAULT_WINDOW_CAP;
        Self {
            levels: DEFAULT_LEVELS,
            thresholds: vec![DEFAULT_THRESHOLD; DEFAULT_LEVELS],
            window_cap: DEFAULT_WINDOW_CAP,
            predictor,
            online_learning: false,
            retain_hierarchy: true,
            retain_tokens: true,
        }
    }

    /// Sets the depth, broadcasting the first threshold to every level.
    pub fn levels(mut self, levels: usize) -> Self {
        let eps = self.thresholds.first().copied().unwrap_or(DEFAULT_THRESHOLD);
        self.levels = levels;
        self.thresholds = vec![eps; levels];
        self.predictor.levels = levels;
        self
    }

    pub fn threshold(mut self, eps: f64) -> Self {
        self.thresholds = vec![eps; self.levels];
        self
    }

    pub fn thresholds(mut self, thresholds: Vec<f64>) -> Self {
        self.thresholds = thresholds;
        self
    }

    pub fn window_cap(mut self, cap: usize) -> Self {
        self.window_cap = cap;
        self.predictor.window_cap = cap;
        self
    }

    pub fn dim(&self) -> usize {
        self.predictor.dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidConfig("levels must be at least 1".into()));
        }
        if self.thresholds.len() != self.levels {
            return Err(Error::InvalidConfig(format!(
                "{} thresholds given for {} levels",
                self.thresholds.len(),
                self.levels
            )));
        }
        if let Some(eps) = self.thresholds.iter().find(|e| !(**e > 0.0 && **e <= 2.0)) {
            return Err(Error::InvalidConfig(format!("threshold {eps} outside (0, 2]")));
        }
        if self.window_cap == 0 {
            return Err(Error::InvalidConfig("window_cap must be at least 1".into()));
        }
        if self.predictor.levels != self.levels || self.predictor.window_cap != self.window_cap {
            return Err(Error::InvalidConfig(
                "predictor levels/window_cap disagree with the engine config".into(),
            ));
        }
        if self.online_learning && !self.predictor.kind.is_trainable() {
            return Err(Error::InvalidConfig(format!(
                "online learning needs a trainable predictor, got {}",
                self.predictor.kind
            )));
        }
        self.predictor.validate()
    }
}

/// Boundary rule: strictly greater than the threshold.
pub fn detect_boundary(error: f64, threshold: f64) -> bool {
    error > threshold
}

/// Cosine error for the engine. A zero-norm side (possible for abstracted
/// latents such as the mean of opposite vectors) scores 1, as if orthogonal.
fn engine_error(predicted: &[f64], actual: &[f64]) -> f64 {
    match linalg::cosine(predicted, actual) {
        Some(c) => 1.0 - c,
        None => 1.0,
    }
}

#[derive(Debug, Clone)]
struct OpenSegment {
    start: u64,
    start_frame: u64,
    end: u64,
    end_frame: u64,
    tokens: Vec<LatentToken>,
    essential_index: u64,
    essential_frame: u64,
    error_peak: f64,
}

impl OpenSegment {
    fn new(token: &LatentToken) -> Self {
        Self {
            start: token.ordinal,
            start_frame: token.start_frame,
            end: token.ordinal,
            end_frame: token.time,
            tokens: Vec::new(),
            essential_index: token.ordinal,
            essential_frame: token.time,
            error_peak: token.error,
        }
    }

    fn push(&mut self, token: LatentToken, keep: bool) {
        self.end = token.ordinal;
        self.end_frame = token.time;
        if token.error > self.error_peak {
            self.error_peak = token.error;
            self.essential_index = token.ordinal;
            self.essential_frame = token.time;
        }
        if keep {
            self.tokens.push(token);
        }
    }
}

#[derive(Debug, Clone, Default)]
struct LevelState {
    context: VecDeque<Vec<f64>>,
    latent: Option<Vec<f64>>,
    prediction: Option<Vec<f64>>,
    /// Latents of levels `1..=l` the stored prediction was computed from.
    prediction_inputs: Vec<Vec<f64>>,
    tokens_seen: u64,
    finalized: u64,
    open: Option<OpenSegment>,
}

/// Read-only view of one level's open state.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSnapshot {
    pub context_len: usize,
    pub open_tokens: u64,
    pub tokens_seen: u64,
    pub finalized: u64,
    pub latent: Option<Vec<f64>>,
    pub prediction: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainingLoss {
    pub sum: f64,
    pub points: u64,
}

/// One causal segmentation session.
#[derive(Debug, Clone)]
pub struct EesEngine {
    config: EesConfig,
    predictor: PredictorState,
    levels: Vec<LevelState>,
    clock: u64,
    hierarchy: EventHierarchy,
    flushing: bool,
    loss: TrainingLoss,
}

impl EesEngine {
    pub fn new(config: EesConfig) -> Result<Self> {
        config.validate()?;
        let predictor = PredictorState::new(config.predictor.clone())?;
        Self::with_predictor(config, predictor)
    }

    /// Starts a session with existing (e.g. trained or loaded) predictor state.
    pub fn with_predictor(mut config: EesConfig, predictor: PredictorState) -> Result<Self> {
        config.predictor = predictor.config().clone();
        config.validate()?;
        Ok(Self {
            levels: vec![LevelState::default(); config.levels],
            hierarchy: EventHierarchy::empty(config.levels),
            config,
            predictor,
            clock: 0,
            flushing: false,
            loss: TrainingLoss::default(),
        })
    }

    pub fn config(&self) -> &EesConfig {
        &self.config
    }

    pub fn predictor(&self) -> &PredictorState {
        &self.predictor
    }

    pub fn into_predictor(self) -> PredictorState {
        self.predictor
    }

    /// Index of the next expected frame.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Finalized segments retained so far (empty if retention is off).
    pub fn hierarchy(&self) -> &EventHierarchy {
        &self.hierarchy
    }

    pub fn training_loss(&self) -> TrainingLoss {
        self.loss
    }

    pub fn level_snapshot(&self, level: usize) -> LevelSnapshot {
        let st = &self.levels[level - 1];
        LevelSnapshot {
            context_len: st.context.len(),
            open_tokens: st.open.as_ref().map_or(0, |o| o.end - o.start + 1),
            tokens_seen: st.tokens_seen,
            finalized: st.finalized,
            latent: st.latent.clone(),
            prediction: st.prediction.clone(),
        }
    }

    /// Feeds frame `clock()`. Returns the segments finalized by this frame,
    /// lower levels first.
    pub fn ingest_frame(&mut self, frame: &FrameEmbedding) -> Result<Vec<EventSegment>> {
        if frame.index != self.clock {
            return Err(Error::OutOfOrder { expected: self.clock, got: frame.index });
        }
        self.ingest_row(&frame.vector)
    }

    /// Feeds the next frame without an explicit index.
    pub fn ingest_row(&mut self, vector: &[f32]) -> Result<Vec<EventSegment>> {
        let d = self.config.dim();
        if vector.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: vector.len() });
        }
        if let Some(position) = vector.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { frame: self.clock, position });
        }
        let unit = crate::stream::normalize_frame(&linalg::to_f64(vector))?;
        let t = self.clock;
        let token = LatentToken { level: 1, ordinal: t, start_frame: t, time: t, vector: unit, error: 0.0 };
        let mut emitted = Vec::new();
        self.push(1, token, &mut emitted)?;
        self.clock += 1;
        Ok(emitted)
    }

    fn push(&mut self, level: usize, mut token: LatentToken, out: &mut Vec<EventSegment>) -> Result<()> {
        let i = level - 1;
        let eps = self.config.thresholds[i];

        let error = self.levels[i].prediction.as_deref().map(|p| engine_error(p, &token.vector));
        if let (Some(_), true, false) = (error, self.config.online_learning, self.flushing) {
            let inputs: Vec<&[f64]> = self.levels[i].prediction_inputs.iter().map(Vec::as_slice).collect();
            let outcome = self.predictor.online_update(level, &inputs, &token.vector)?;
            if outcome.applied {
                self.loss.sum += outcome.loss;
                self.loss.points += 1;
            }
        }

        let boundary = error.is_some_and(|e| detect_boundary(e, eps));
        let promoted = if boundary { self.finalize(level, out) } else { None };

        let keep = self.config.retain_tokens;
        let cap = self.config.window_cap;
        let st = &mut self.levels[i];
        token.level = level;
        token.ordinal = st.tokens_seen;
        token.error = error.unwrap_or(0.0);
        st.tokens_seen += 1;
        st.context.push_back(token.vector.clone());
        if st.context.len() > cap {
            st.context.pop_front();
        }
        match &mut st.open {
            Some(open) => open.push(token, keep),
            None => {
                let mut open = OpenSegment::new(&token);
                if keep {
                    open.tokens.push(token);
                }
                st.open = Some(open);
            }
        }

        let latent = self.predictor.abstract_window(level, st.context.iter().map(Vec::as_slice))?;
        st.latent = Some(latent);
        let inputs: Vec<Vec<f64>> = self.levels[..=i]
            .iter()
            .map(|s| s.latent.clone().expect("lower levels hold a latent once a higher level has tokens"))
            .collect();
        let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        let prediction = self.predictor.predict_next(level, &refs)?;
        let st = &mut self.levels[i];
        st.prediction = Some(prediction);
        st.prediction_inputs = inputs;

        if let Some(next) = promoted {
            self.push(level + 1, next, out)?;
        }
        Ok(())
    }

    /// Closes the open level-`level` segment, records it and returns the token
    /// to promote (if `level` is below the top).
    fn finalize(&mut self, level: usize, out: &mut Vec<EventSegment>) -> Option<LatentToken> {
        let st = &mut self.levels[level - 1];
        let open = st.open.take()?;
        st.context.clear();
        st.finalized += 1;
        let embedding = st.latent.clone().unwrap_or_default();
        let segment = EventSegment {
            level,
            start: open.start,
            end: open.end,
            start_frame: open.start_frame,
            end_frame: open.end_frame,
            tokens: open.tokens,
            essential_index: open.essential_index,
            essential_frame: open.essential_frame,
            error_peak: open.error_peak,
            embedding,
            finalized: true,
            provisional: self.flushing,
        };
        let promoted = (level < self.config.levels).then(|| LatentToken {
            level: level + 1,
            ordinal: 0,
            start_frame: segment.start_frame,
            time: segment.end_frame,
            vector: segment.embedding.clone(),
            error: 0.0,
        });
        if self.config.retain_hierarchy {
            self.hierarchy.push(segment.clone());
        }
        out.push(segment);
        promoted
    }

    /// Segments that a flush at this point would close, bottom-up. Every open
    /// context is closed as a provisional segment and promoted upward. The
    /// engine itself is left untouched, so ingestion can continue.
    pub fn flush_segments(&self) -> Vec<EventSegment> {
        let mut scratch = Self {
            config: EesConfig { retain_hierarchy: false, online_learning: false, ..self.config.clone() },
            predictor: self.predictor.clone(),
            levels: self.levels.clone(),
            clock: self.clock,
            hierarchy: EventHierarchy::empty(self.config.levels),
            flushing: true,
            loss: self.loss,
        };
        let mut out = Vec::new();
        for level in 1..=scratch.config.levels {
            if let Some(token) = scratch.finalize(level, &mut out) {
                scratch
                    .push(level + 1, token, &mut out)
                    .expect("flush replays tokens the engine already validated");
            }
        }
        out
    }

    /// Retained hierarchy plus everything a flush would close.
    pub fn flush(&self) -> EventHierarchy {
        let mut h = self.hierarchy.clone();
        for seg in self.flush_segments() {
            h.push(seg);
        }
        h
    }
}

/// Runs a whole in-memory stream and flushes it.
pub fn segment_stream(config: EesConfig, frames: &[FrameEmbedding]) -> Result<EventHierarchy> {
    let mut engine = EesEngine::new(EesConfig { retain_hierarchy: true, ..config })?;
    for frame in frames {
        engine.ingest_frame(frame)?;
    }
    Ok(engine.flush())
}
