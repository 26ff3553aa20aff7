//! Abstraction and prediction modules for each hierarchy level, the cosine
//! prediction-error metric, and online/offline predictor fitting.
//!
//! Three reference kinds are provided:
//!
//! * `mean_pool_identity`: abstraction is the window mean, prediction is the
//!   current latent of the same level (persistence). No parameters.
//! * `linear_ar`: abstraction is the window mean, prediction is an affine map
//!   of the concatenated latents of levels `1..=l`.
//! * `mlp`: abstraction is `MLP(mean(window))`, prediction is a one-hidden-layer
//!   tanh MLP over the concatenated latents of levels `1..=l`.
//!
//! Fitting minimises `||predict_next(..) - observed||^2` by plain SGD; the
//! engine still scores predictions with the cosine error.

pub mod checkpoint;
pub mod nn;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
pub use nn::{Affine, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    MeanPoolIdentity,
    LinearAr,
    Mlp,
}

impl PredictorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MeanPoolIdentity => "mean_pool_identity",
            Self::LinearAr => "linear_ar",
            Self::Mlp => "mlp",
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            Self::MeanPoolIdentity => 0,
            Self::LinearAr => 1,
            Self::Mlp => 2,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Self::MeanPoolIdentity),
            1 => Some(Self::LinearAr),
            2 => Some(Self::Mlp),
            _ => None,
        }
    }

    pub fn is_trainable(self) -> bool {
        !matches!(self, Self::MeanPoolIdentity)
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_pool_identity" | "mean_pool" | "identity" => Ok(Self::MeanPoolIdentity),
            "linear_ar" | "linear" => Ok(Self::LinearAr),
            "mlp" => Ok(Self::Mlp),
            other => Err(Error::InvalidConfig(format!("unknown predictor kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    pub dim: usize,
    pub levels: usize,
    pub window_cap: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl PredictorConfig {
    pub fn new(kind: PredictorKind, dim: usize, levels: usize) -> Self {
        Self { kind, dim, levels, window_cap: 32, hidden: 64, learning_rate: 1e-2, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.levels == 0 {
            return bad("levels must be at least 1");
        }
        if self.window_cap == 0 {
            return bad("window_cap must be at least 1");
        }
        if self.kind == PredictorKind::Mlp && self.hidden == 0 {
            return bad("hidden must be at least 1 for the mlp predictor");
        }
        if self.kind.is_trainable() && !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LevelParams {
    Identity,
    Linear(Affine),
    Mlp { abstraction: Mlp, predictor: Mlp },
}

/// Running fit statistics for one level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LevelStats {
    pub updates: u64,
    pub skipped: u64,
    pub loss_sum: f64,
}

impl LevelStats {
    pub fn mean_loss(&self) -> Option<f64> {
        (self.updates > 0).then(|| self.loss_sum / self.updates as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    /// Squared error of the prediction before the step.
    pub loss: f64,
    pub applied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState {
    config: PredictorConfig,
    levels: Vec<LevelParams>,
    stats: Vec<LevelStats>,
}

impl PredictorState {
    /// Fresh parameters drawn from `config.seed`.
    ///
    /// `linear_ar` starts at block-identity persistence plus a small seeded
    /// perturbation; `mlp` layers are uniform in `+-1/sqrt(fan_in)`.
    pub fn new(config: PredictorConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.dim;
        let levels = (1..=config.levels)
            .map(|l| match config.kind {
                PredictorKind::MeanPoolIdentity => LevelParams::Identity,
                PredictorKind::LinearAr => {
                    let mut map = Affine::zeros(d, l * d);
                    let jitter = 0.1 / ((l * d) as f64).sqrt();
                    for w in &mut map.weight {
                        *w = rng.random_range(-jitter..=jitter);
                    }
                    for i in 0..d {
                        map.weight[i * l * d + (l - 1) * d + i] += 1.0;
                    }
                    LevelParams::Linear(map)
                }
                PredictorKind::Mlp => LevelParams::Mlp {
                    abstraction: Mlp::uniform(d, config.hidden, d, &mut rng),
                    predictor: Mlp::uniform(l * d, config.hidden, d, &mut rng),
                },
            })
            .collect();
        Ok(Self { stats: vec![LevelStats::default(); config.levels], config, levels })
    }

    /// Builds a state from explicit parameter blocks (checkpoint loading, tests).
    pub fn from_parts(config: PredictorConfig, levels: Vec<LevelParams>) -> Result<Self> {
        config.validate()?;
        if levels.len() != config.levels {
            return Err(Error::InvalidConfig(format!(
                "expected {} parameter blocks, got {}",
                config.levels,
                levels.len()
            )));
        }
        let d = config.dim;
        for (i, p) in levels.iter().enumerate() {
            let l = i + 1;
            let ok = match (config.kind, p) {
                (PredictorKind::MeanPoolIdentity, LevelParams::Identity) => true,
                (PredictorKind::LinearAr, LevelParams::Linear(m)) => m.rows == d && m.cols == l * d,
                (PredictorKind::Mlp, LevelParams::Mlp { abstraction, predictor }) => {
                    abstraction.input_dim() == d
                        && abstraction.output.rows == d
                        && predictor.input_dim() == l * d
                        && predictor.output.rows == d
                        && abstraction.hidden.rows == config.hidden
                        && predictor.hidden.rows == config.hidden
                }
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidConfig(format!(
                    "level {l} parameters do not match a {} predictor of dim {d}",
                    config.kind
                )));
            }
        }
        Ok(Self { stats: vec![LevelStats::default(); config.levels], config, levels })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn level_params(&self, level: usize) -> &LevelParams {
        &self.levels[level - 1]
    }

    pub fn level_params_mut(&mut self, level: usize) -> &mut LevelParams {
        &mut self.levels[level - 1]
    }

    pub fn stats(&self) -> &[LevelStats] {
        &self.stats
    }

    pub fn skipped_updates(&self) -> u64 {
        self.stats.iter().map(|s| s.skipped).sum()
    }

    fn check_level(&self, level: usize) -> Result<()> {
        if level == 0 || level > self.config.levels {
            return Err(Error::InvalidConfig(format!(
                "level {level} outside 1..={}",
                self.config.levels
            )));
        }
        Ok(())
    }

    /// Abstraction module: maps a window of tokens to one latent.
    pub fn abstract_window<'a, I>(&self, level: usize, window: I) -> Result<Vec<f64>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        self.check_level(level)?;
        let d = self.config.dim;
        let mut acc = vec![0.0; d];
        let mut n = 0usize;
        for v in window {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Empty("abstraction window"));
        }
        if n > self.config.window_cap {
            return Err(Error::InvalidConfig(format!(
                "window of {n} tokens exceeds window_cap {}",
                self.config.window_cap
            )));
        }
        let inv = 1.0 / n as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Ok(match &self.levels[level - 1] {
            LevelParams::Mlp { abstraction, .. } => abstraction.forward(&acc),
            _ => acc,
        })
    }

    fn concat_latents(&self, level: usize, latents: &[&[f64]]) -> Result<Vec<f64>> {
        self.check_level(level)?;
        if latents.len() != level {
            return Err(Error::InvalidConfig(format!(
                "level {level} prediction needs {level} latents, got {}",
                latents.len()
            )));
        }
        let d = self.config.dim;
        let mut x = Vec::with_capacity(level * d);
        for z in latents {
            if z.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: z.len() });
            }
            x.extend_from_slice(z);
        }
        Ok(x)
    }

    /// Prediction module: next token at `level` from the current latents of
    /// levels `1..=level` (in level order).
    pub fn predict_next(&self, level: usize, latents: &[&[f64]]) -> Result<Vec<f64>> {
        let x = self.concat_latents(level, latents)?;
        Ok(match &self.levels[level - 1] {
            LevelParams::Identity => latents[level - 1].to_vec(),
            LevelParams::Linear(map) => map.apply(&x),
            LevelParams::Mlp { predictor, .. } => predictor.forward(&x),
        })
    }

    /// One SGD step on `||predict_next(level, latents) - observed||^2`.
    /// A non-finite gradient skips the step and is counted in the level stats.
    pub fn online_update(
        &mut self,
        level: usize,
        latents: &[&[f64]],
        observed: &[f64],
    ) -> Result<UpdateOutcome> {
        let x = self.concat_latents(level, latents)?;
        let d = self.config.dim;
        if observed.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: observed.len() });
        }
        let lr = self.config.learning_rate;
        let (loss, applied) = match &mut self.levels[level - 1] {
            LevelParams::Identity => {
                return Ok(UpdateOutcome {
                    loss: nn::squared_error(latents[level - 1], observed),
                    applied: false,
                })
            }
            LevelParams::Linear(map) => {
                let (loss, grad) = nn::affine_loss_and_grad(map, &x, observed);
                let ok = grad.iter().all(|g| g.is_finite());
                if ok {
                    for (p, g) in map.params_mut().zip(&grad) {
                        *p -= lr * g;
                    }
                }
                (loss, ok)
            }
            LevelParams::Mlp { predictor, .. } => {
                let (loss, grad) = predictor.loss_and_grad(&x, observed);
                let ok = grad.iter().all(|g| g.is_finite());
                if ok {
                    let updated: Vec<f64> =
                        predictor.params().iter().zip(&grad).map(|(p, g)| p - lr * g).collect();
                    predictor.set_params(&updated);
                }
                (loss, ok)
            }
        };
        let stats = &mut self.stats[level - 1];
        if applied {
            stats.updates += 1;
            stats.loss_sum += loss;
        } else {
            stats.skipped += 1;
        }
        Ok(UpdateOutcome { loss, applied })
    }
}

/// Cosine distance `1 - cos(predicted, actual)`, in `[0, 2]`.
pub fn prediction_error(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch { expected: predicted.len(), got: actual.len() });
    }
    if predicted.iter().chain(actual).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { frame: 0, position: 0 });
    }
    let cos = linalg::cosine(predicted, actual).ok_or(Error::ZeroVector)?;
    Ok(1.0 - cos)
}
