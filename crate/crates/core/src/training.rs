//! Offline training: replay a corpus through the engine with online updates.

use serde::{Deserialize, Serialize};

use crate::engine::{EesConfig, EesEngine};
use crate::error::{Error, Result};
use crate::predictors::PredictorState;
use crate::stream::FrameEmbedding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
    pub points: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub state: PredictorState,
    pub epoch_losses: Vec<EpochLoss>,
}

impl TrainingReport {
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,points\n");
        for e in &self.epoch_losses {
            out.push_str(&format!("{},{:.9},{}\n", e.epoch, e.mean_loss, e.points));
        }
        out
    }
}

/// Streams every corpus entry through a fresh engine per epoch, carrying the
/// predictor parameters across streams and epochs. Same corpus, config and
/// seed give the same parameters.
pub fn train_predictor(corpus: &[Vec<FrameEmbedding>], config: &EesConfig, epochs: usize) -> Result<TrainingReport> {
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(Error::Empty("training corpus"));
    }
    let d = config.dim();
    for frame in corpus.iter().flatten() {
        if frame.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: frame.dim() });
        }
    }
    let mut state = PredictorState::new(config.predictor.clone())?;
    if epochs == 0 {
        return Ok(TrainingReport { state, epoch_losses: Vec::new() });
    }
    if !config.predictor.kind.is_trainable() {
        return Err(Error::InvalidConfig(format!("predictor {} has no trainable parameters", config.predictor.kind)));
    }
    let session = EesConfig { online_learning: true, retain_hierarchy: false, retain_tokens: false, ..config.clone() };
    let mut epoch_losses = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let (mut sum, mut points) = (0.0, 0u64);
        for stream in corpus {
            let mut engine = EesEngine::with_predictor(session.clone(), state)?;
            for (i, frame) in stream.iter().enumerate() {
                engine.ingest_frame(&FrameEmbedding::new(i as u64, frame.vector.clone()))?;
            }
            let loss = engine.training_loss();
            sum += loss.sum;
            points += loss.points;
            state = engine.into_predictor();
        }
        let mean_loss = if points == 0 { 0.0 } else { sum / points as f64 };
        epoch_losses.push(EpochLoss { epoch, mean_loss, points });
    }
    Ok(TrainingReport { state, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::PredictorKind;
    use crate::synth::corpus::{CorpusKind, CorpusParams};

    fn corpus(streams: usize) -> Vec<Vec<FrameEmbedding>> {
        let mut p = CorpusParams::new(CorpusKind::Clean, 9);
        p.streams = streams;
        p.dim = 8;
        p.frames = 64;
        p.generate().unwrap().into_iter().map(|s| s.frames).collect()
    }

    #[test]
    fn linear_ar_three_epochs() {
        let cfg = EesConfig::with_predictor(8, PredictorKind::LinearAr);
        let r = train_predictor(&corpus(10), &cfg, 3).unwrap();
        assert_eq!(r.epoch_losses.len(), 3);
        assert!(r.epoch_losses.iter().all(|e| e.mean_loss > 0.0 && e.points > 0));
        assert!(r.epoch_losses[2].mean_loss <= r.epoch_losses[0].mean_loss);
        let again = train_predictor(&corpus(10), &cfg, 3).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn zero_epochs_is_initial_state() {
        let cfg = EesConfig::with_predictor(8, PredictorKind::Mlp);
        let r = train_predictor(&corpus(2), &cfg, 0).unwrap();
        assert_eq!(r.state, PredictorState::new(cfg.predictor.clone()).unwrap());
        assert!(r.epoch_losses.is_empty());
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = EesConfig::with_predictor(8, PredictorKind::LinearAr);
        assert!(matches!(train_predictor(&[], &cfg, 1), Err(Error::Empty(_))));
        let wrong = vec![vec![FrameEmbedding::new(0, vec![1.0; 3])]];
        assert!(matches!(train_predictor(&wrong, &cfg, 1), Err(Error::DimensionMismatch { .. })));
        let identity = EesConfig::new(8);
        assert!(train_predictor(&corpus(1), &identity, 1).is_err());
    }
}
