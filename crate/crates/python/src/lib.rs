//! Python bindings: `import ees`.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ees_core::hierarchy::hierarchy_stats;
use ees_core::synth::{generate_stream, Centroid, SegmentSpec, SynthSpec};
use ees_core::{
    AttentionConfig, Consolidator, EesConfig, EesEngine, EssentialStrategy, EventHierarchy, EventSegment,
    FrameEmbedding, PredictorKind, StreamHeader,
};

fn err(e: ees_core::Error) -> PyErr {
    match e {
        ees_core::Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A single threshold for every level or one per level.
#[derive(FromPyObject)]
enum Thresholds {
    One(f64),
    PerLevel(Vec<f64>),
}

fn frames_from_rows(rows: Vec<Vec<f32>>) -> Vec<FrameEmbedding> {
    rows.into_iter().enumerate().map(|(i, v)| FrameEmbedding::new(i as u64, v)).collect()
}

fn segment_dict<'py>(py: Python<'py>, seg: &EventSegment) -> PyResult<Bound<'py, PyDict>> {
    let rec = seg.to_record(!seg.tokens.is_empty());
    let d = PyDict::new(py);
    d.set_item("level", rec.level)?;
    d.set_item("start_frame", rec.start_frame)?;
    d.set_item("end_frame", rec.end_frame)?;
    d.set_item("essential_frame", rec.essential_frame)?;
    d.set_item("error_peak", rec.error_peak)?;
    d.set_item("provisional", rec.provisional)?;
    if let Some(e) = rec.embedding {
        d.set_item("embedding", e)?;
    }
    Ok(d)
}

#[allow(clippy::too_many_arguments)]
fn build_config(
    dim: usize,
    levels: usize,
    threshold: Thresholds,
    window_cap: usize,
    predictor: &str,
    online_learning: bool,
    seed: u64,
    retain: bool,
) -> PyResult<EesConfig> {
    let kind: PredictorKind = predictor.parse().map_err(err)?;
    let thresholds = match threshold {
        Thresholds::One(t) => vec![t; levels],
        Thresholds::PerLevel(v) => v,
    };
    let mut c = EesConfig::with_predictor(dim, kind).levels(levels).thresholds(thresholds).window_cap(window_cap);
    c.online_learning = online_learning;
    c.predictor.seed = seed;
    c.retain_hierarchy = retain;
    c.retain_tokens = retain;
    c.validate().map_err(err)?;
    Ok(c)
}

/// Streaming segmenter. `ingest` returns the segments that closed.
#[pyclass(module = "ees")]
struct Engine {
    inner: EesEngine,
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (dim, levels=3, threshold=Thresholds::One(0.4), window_cap=32, predictor="mean_pool_identity", online_learning=false, seed=0, retain=true))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        dim: usize,
        levels: usize,
        threshold: Thresholds,
        window_cap: usize,
        predictor: &str,
        online_learning: bool,
        seed: u64,
        retain: bool,
    ) -> PyResult<Self> {
        let config = build_config(dim, levels, threshold, window_cap, predictor, online_learning, seed, retain)?;
        Ok(Self { inner: EesEngine::new(config).map_err(err)? })
    }

    fn ingest<'py>(&mut self, py: Python<'py>, row: Vec<f32>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let closed = self.inner.ingest_row(&row).map_err(err)?;
        closed.iter().map(|s| segment_dict(py, s)).collect()
    }

    /// Segments still open, closed provisionally. The engine is unchanged.
    fn flush<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.inner.flush_segments().iter().map(|s| segment_dict(py, s)).collect()
    }

    /// Retained segments plus the provisional tail.
    fn hierarchy(&self) -> Hierarchy {
        Hierarchy { inner: self.inner.flush() }
    }

    #[getter]
    fn clock(&self) -> u64 {
        self.inner.clock()
    }
}

#[pyclass(module = "ees")]
struct Hierarchy {
    inner: EventHierarchy,
}

#[pymethods]
impl Hierarchy {
    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    /// Segment count per level, finest first.
    fn counts(&self) -> Vec<usize> {
        hierarchy_stats(&self.inner).counts
    }

    fn segments<'py>(&self, py: Python<'py>, level: usize) -> PyResult<Vec<Bound<'py, PyDict>>> {
        if level == 0 || level > self.inner.depth() {
            return Err(PyValueError::new_err(format!("level must be in 1..={}", self.inner.depth())));
        }
        self.inner.level(level).iter().map(|s| segment_dict(py, s)).collect()
    }

    /// One dict per top-level event with `abstract`, `coarse` and `fine` vectors.
    #[pyo3(signature = (essential="max_error", seed=0, scale=None))]
    fn consolidate<'py>(
        &self,
        py: Python<'py>,
        essential: &str,
        seed: u64,
        scale: Option<f64>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let mut strategy: EssentialStrategy = essential.parse().map_err(err)?;
        if let EssentialStrategy::Random { .. } = strategy {
            strategy = EssentialStrategy::Random { seed };
        }
        let dim = self.inner.top_level().iter().find_map(|s| s.tokens.first()).map_or(0, |t| t.vector.len());
        let mut attention = AttentionConfig::identity(dim);
        if let Some(s) = scale {
            attention = attention.with_scale(s);
        }
        let result = Consolidator::new(attention).with_strategy(strategy).consolidate_all(&self.inner).map_err(err)?;
        result
            .summaries
            .iter()
            .map(|s| {
                let d = PyDict::new(py);
                d.set_item("span", (s.start_frame, s.end_frame))?;
                d.set_item("abstract", &s.abstract_)?;
                d.set_item("coarse", &s.coarse)?;
                d.set_item("fine", &s.fine)?;
                Ok(d)
            })
            .collect()
    }
}

/// Segments a whole stream of rows in one call.
#[pyfunction]
#[pyo3(signature = (rows, levels=3, threshold=Thresholds::One(0.4), window_cap=32, predictor="mean_pool_identity", online_learning=false, seed=0))]
fn segment(
    rows: Vec<Vec<f32>>,
    levels: usize,
    threshold: Thresholds,
    window_cap: usize,
    predictor: &str,
    online_learning: bool,
    seed: u64,
) -> PyResult<Hierarchy> {
    let dim = rows.first().map_or(0, Vec::len);
    let config = build_config(dim, levels, threshold, window_cap, predictor, online_learning, seed, true)?;
    let frames = frames_from_rows(rows);
    Ok(Hierarchy { inner: ees_core::segment_stream(config, &frames).map_err(err)? })
}

#[pyfunction]
fn prediction_error(predicted: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    ees_core::prediction_error(&predicted, &actual).map_err(err)
}

#[pyfunction]
fn normalize_frame(v: Vec<f64>) -> PyResult<Vec<f64>> {
    ees_core::normalize_frame(&v).map_err(err)
}

/// Reads an EMBS file into `(dim, rows)`.
#[pyfunction]
fn read_stream(path: &str) -> PyResult<(u32, Vec<Vec<f32>>)> {
    let bytes = std::fs::read(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
    let (header, frames) = ees_core::read_stream(&bytes).map_err(err)?;
    Ok((header.dim, frames.into_iter().map(|f| f.vector).collect()))
}

#[pyfunction]
#[pyo3(signature = (path, rows, fps=None))]
fn write_stream(path: &str, rows: Vec<Vec<f32>>, fps: Option<(u32, u32)>) -> PyResult<()> {
    let dim = rows.first().map_or(0, Vec::len) as u32;
    let mut header = StreamHeader::bounded(dim, rows.len() as u64);
    if let Some((n, d)) = fps {
        header = header.with_fps(n, d);
    }
    let bytes = ees_core::write_stream(&header, &frames_from_rows(rows)).map_err(err)?;
    std::fs::write(path, bytes).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))
}

/// Synthetic stream from `(length, centroid_id, noise_sigma, drift_rate)`
/// tuples. Returns `(rows, boundary_frames)`.
#[pyfunction]
#[pyo3(signature = (dim, segments, seed=0, separation=0.2))]
fn generate(
    dim: usize,
    segments: Vec<(usize, u32, f64, f64)>,
    seed: u64,
    separation: f64,
) -> PyResult<(Vec<Vec<f32>>, Vec<u64>)> {
    let segments = segments
        .into_iter()
        .map(|(length, c, noise_sigma, drift_rate)| SegmentSpec {
            length,
            centroid: Centroid::Drawn(c),
            noise_sigma,
            drift_rate,
        })
        .collect();
    let spec = SynthSpec { dim, segments, seed, min_centroid_separation: separation };
    let (frames, truth) = generate_stream(&spec).map_err(err)?;
    Ok((frames.into_iter().map(|f| f.vector).collect(), truth.boundary_frames))
}

/// `(precision, recall, f1)` with one-to-one matching within `tolerance` frames.
#[pyfunction]
#[pyo3(signature = (predicted, truth, tolerance=1))]
fn boundary_f1(predicted: Vec<u64>, truth: Vec<u64>, tolerance: u64) -> (f64, f64, f64) {
    let s = ees_core::synth::metrics::boundary_f1_frames(&predicted, &truth, tolerance);
    (s.precision, s.recall, s.f1)
}

#[pymodule]
fn ees(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Engine>()?;
    m.add_class::<Hierarchy>()?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(prediction_error, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_frame, m)?)?;
    m.add_function(wrap_pyfunction!(read_stream, m)?)?;
    m.add_function(wrap_pyfunction!(write_stream, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_f1, m)?)?;
    Ok(())
}
