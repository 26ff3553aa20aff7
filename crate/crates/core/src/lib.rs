//! Streaming elastic-scale event segmentation (EES) and hierarchical event
//! consolidation (HEC) over per-frame embedding streams.
//!
//! Frames arrive as `EMBS` rows ([`stream`]), pass through the causal
//! multi-level segmenter ([`engine`]) which emits [`EventSegment`]s as soon as
//! they close, and the resulting [`EventHierarchy`] can be condensed into one
//! summary per top-level event ([`hec`]). [`synth`] and [`bench`] provide
//! seeded corpora, baselines and metrics.
//!
//! ```
//! use ees_core::{segment_stream, EesConfig, FrameEmbedding};
//!
//! let frames: Vec<FrameEmbedding> = (0..10)
//!     .map(|i| FrameEmbedding::new(i, if i < 5 { vec![1.0, 0.0] } else { vec![0.0, 1.0] }))
//!     .collect();
//! let h = segment_stream(EesConfig::new(2), &frames).unwrap();
//! let spans: Vec<_> = h.level(1).iter().map(|s| (s.start_frame, s.end_frame)).collect();
//! assert_eq!(spans, vec![(0, 4), (5, 9)]);
//! ```

pub mod bench;
pub mod engine;
pub mod error;
pub mod hec;
pub mod hierarchy;
pub mod linalg;
pub mod predictors;
pub mod stream;
pub mod synth;
pub mod training;

pub use engine::{detect_boundary, segment_stream, EesConfig, EesEngine};
pub use error::{Error, Result};
pub use hec::{AttentionConfig, ConsolidationResult, Consolidator, EssentialStrategy, EventSummary};
pub use hierarchy::{EventHierarchy, EventSegment, LatentToken, SegmentRecord};
pub use predictors::checkpoint::Checkpoint;
pub use predictors::{prediction_error, PredictorConfig, PredictorKind, PredictorState};
pub use stream::{normalize_frame, read_stream, write_stream, FrameEmbedding, StreamHeader, StreamReader, StreamWriter};
pub use training::{train_predictor, TrainingReport};
