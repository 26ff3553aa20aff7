//! Synthetic streams, reference segmenters and metrics.

pub mod baselines;
pub mod corpus;
pub mod generator;
pub mod metrics;

pub use baselines::{baseline_cluster_segment, baseline_threshold_segment, kmeans, span_boundaries, Span};
pub use corpus::{load_corpus, write_corpus, CorpusKind, CorpusParams, CorpusStream, Manifest};
pub use generator::{generate_nested, generate_stream, Centroid, GroundTruth, NestedSpec, SegmentSpec, SynthSpec};
pub use metrics::{boundary_f1, boundary_f1_frames, cohesion_metrics, BoundaryScore, Cohesion};
