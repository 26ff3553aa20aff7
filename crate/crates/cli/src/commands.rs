use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ees_core::bench::{run_bench, BenchConfig};
use ees_core::hec::{AttentionConfig, Consolidator};
use ees_core::hierarchy::{read_records, rebuild_hierarchy, write_record, StatsAccumulator};
use ees_core::synth::corpus::{load_corpus, write_corpus};
use ees_core::{Checkpoint, EesConfig, EesEngine, Error, FrameEmbedding, StreamReader};

use crate::config::RunConfig;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_NO_EMBEDDINGS: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: EXIT_INPUT, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig(_) | Error::UnsatisfiableSeparation { .. } | Error::Empty(_) => EXIT_CONFIG,
            _ => EXIT_INPUT,
        };
        Self { code, message: e.to_string() }
    }
}

fn with_path(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::input(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(with_path(path))?))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(with_path(p)),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| CliError::input(e.to_string()))
        }
    }
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let file = File::open(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Checkpoint::read_from(BufReader::new(file))
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Engine config for `dim`, taking depth and window cap from the checkpoint
/// unless they were set explicitly.
fn engine_config(cfg: &RunConfig, dim: usize) -> Result<(EesConfig, Option<Checkpoint>), CliError> {
    let Some(path) = &cfg.checkpoint else {
        let c = cfg.ees_config(dim);
        c.validate()?;
        return Ok((c, None));
    };
    let ck = load_checkpoint(path)?;
    let p = ck.predictor.config().clone();
    if p.dim != dim {
        return Err(CliError::config(format!("checkpoint dim {} does not match stream dim {dim}", p.dim)));
    }
    let mut run = cfg.clone();
    for (key, ours, theirs) in [("layers", cfg.layers, p.levels), ("window_cap", cfg.window_cap, p.window_cap)] {
        if run.is_explicit(key) && ours != theirs {
            return Err(CliError::config(format!("{key} = {ours} but the checkpoint was trained with {theirs}")));
        }
    }
    if !run.is_explicit("threshold") || run.thresholds.len() != p.levels {
        let eps = run.thresholds.first().copied().unwrap_or(ees_core::engine::DEFAULT_THRESHOLD);
        if run.is_explicit("threshold") && run.thresholds.len() != 1 {
            return Err(CliError::config("threshold list length does not match the checkpoint depth"));
        }
        run.thresholds = vec![eps; p.levels];
    }
    run.layers = p.levels;
    run.window_cap = p.window_cap;
    run.predictor = p.kind;
    let mut c = run.ees_config(dim);
    c.predictor = p;
    c.validate()?;
    Ok((c, Some(ck)))
}

pub fn segment(cfg: &RunConfig, input: &str, out: Option<PathBuf>, stats: Option<PathBuf>) -> Result<(), CliError> {
    let source: Box<dyn Read> = if input == "-" {
        Box::new(io::stdin().lock())
    } else {
        let path = Path::new(input);
        Box::new(File::open(path).map_err(with_path(path))?)
    };
    let reader = StreamReader::new(BufReader::new(source)).map_err(|e| CliError::input(format!("{input}: {e}")))?;
    let dim = reader.header().dim as usize;
    let (mut config, checkpoint) = engine_config(cfg, dim)?;
    config.retain_hierarchy = false;
    config.retain_tokens = false;
    let mut engine = match checkpoint {
        Some(ck) => EesEngine::with_predictor(config.clone(), ck.predictor)?,
        None => EesEngine::new(config.clone())?,
    };

    let mut sink: Box<dyn Write> = match &out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let io_err = |e: Error| CliError::input(e.to_string());
    let mut acc = StatsAccumulator::new(config.levels);
    let mut failure = None;
    for frame in reader {
        let closed = match frame.and_then(|f| engine.ingest_frame(&f)) {
            Ok(c) => c,
            Err(e) => {
                failure = Some(CliError::input(format!("{input}: {e}")));
                break;
            }
        };
        if !closed.is_empty() {
            for seg in &closed {
                acc.observe(seg);
                write_record(&mut sink, seg, cfg.emit_embeddings).map_err(io_err)?;
            }
            sink.flush().map_err(|e| CliError::input(e.to_string()))?;
        }
    }
    if let Some(e) = failure {
        sink.flush().map_err(|e| CliError::input(e.to_string()))?;
        return Err(e);
    }
    for seg in engine.flush_segments() {
        acc.observe(&seg);
        write_record(&mut sink, &seg, cfg.emit_embeddings).map_err(io_err)?;
    }
    sink.flush().map_err(|e| CliError::input(e.to_string()))?;

    let stats_json = serde_json::to_string(&acc.finish()).map_err(|e| CliError::input(e.to_string()))?;
    match stats {
        Some(p) => fs::write(&p, stats_json + "\n").map_err(with_path(&p))?,
        None => eprintln!("{stats_json}"),
    }
    Ok(())
}

fn read_frames(path: &Path) -> Result<(ees_core::StreamHeader, Vec<FrameEmbedding>), CliError> {
    let file = File::open(path).map_err(with_path(path))?;
    let reader = StreamReader::new(BufReader::new(file)).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let header = reader.header().clone();
    let frames = reader
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok((header, frames))
}

pub fn consolidate(
    cfg: &RunConfig,
    hierarchy: &Path,
    input: &Path,
    out: Option<PathBuf>,
    out_embs: Option<PathBuf>,
) -> Result<(), CliError> {
    let file = File::open(hierarchy).map_err(with_path(hierarchy))?;
    let records = read_records(BufReader::new(file))
        .map_err(|e| CliError::input(format!("{}: {e}", hierarchy.display())))?;
    let depth = records.iter().map(|r| r.level).max().unwrap_or(0);
    if records.iter().any(|r| r.level < depth && r.embedding.is_none()) {
        return Err(CliError {
            code: EXIT_NO_EMBEDDINGS,
            message: format!(
                "{} has no segment embeddings; re-run `ees segment --emit-embeddings` to produce them",
                hierarchy.display()
            ),
        });
    }
    let (header, frames) = read_frames(input)?;
    let h = rebuild_hierarchy(&records, &frames)
        .map_err(|e| CliError::input(format!("{}: {e}", hierarchy.display())))?;

    let dim = header.dim as usize;
    let mut attention = AttentionConfig::identity(dim);
    if let Some(path) = &cfg.checkpoint {
        if let Some(p) = load_checkpoint(path)?.attention {
            if p.dim != dim {
                return Err(CliError::config(format!("checkpoint attention dim {} does not match {dim}", p.dim)));
            }
            attention = attention.with_projections(p);
        }
    }
    if let Some(s) = cfg.attention_scale {
        attention = attention.with_scale(s);
    }
    attention.validate()?;
    let result = Consolidator::new(attention).with_strategy(cfg.essential).consolidate_all(&h)?;
    write_text(out.as_deref(), &(result.to_json()? + "\n"))?;
    if let Some(p) = out_embs {
        let fps = header.fps.map(|f| (f.num, f.den));
        let mut w = result.write_embs(create(&p)?, fps)?;
        w.flush().map_err(with_path(&p))?;
    }
    Ok(())
}

pub fn bench(
    cfg: &RunConfig,
    manifest: Option<PathBuf>,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
    timing: Option<PathBuf>,
    serial: bool,
) -> Result<(), CliError> {
    let corpus = match &manifest {
        Some(m) => load_corpus(m).map_err(|e| CliError::input(format!("{}: {e}", m.display())))?,
        None => cfg.corpus_params().generate()?,
    };
    let dim = corpus.first().and_then(|s| s.frames.first()).map_or(cfg.dim, |f| f.dim());
    let (ees, checkpoint) = engine_config(cfg, dim)?;
    if checkpoint.is_some() {
        return Err(CliError::config("bench runs untrained predictors; drop --checkpoint"));
    }
    let bench_cfg = BenchConfig {
        ees,
        sim_threshold: cfg.sim_threshold,
        tolerance: cfg.tolerance,
        cluster_seed: cfg.seed,
        parallel: !serial,
    };
    let (report, times) = run_bench(&corpus, &bench_cfg)?;
    write_text(out.as_deref(), &(report.to_json()? + "\n"))?;
    if let Some(p) = csv {
        fs::write(&p, report.to_csv()).map_err(with_path(&p))?;
    }
    if let Some(p) = timing {
        let text = serde_json::to_string_pretty(&times).map_err(|e| CliError::input(e.to_string()))?;
        fs::write(&p, text + "\n").map_err(with_path(&p))?;
    }
    let s = &report.summary;
    let f1 = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    eprintln!(
        "{} streams: F1 ees {} threshold {} cluster {}; ees gap wins {:.0}% vs threshold, {:.0}% vs cluster",
        s.streams,
        f1(s.ees.mean_f1),
        f1(s.threshold.mean_f1),
        f1(s.cluster.mean_f1),
        s.ees_gap_beats_threshold * 100.0,
        s.ees_gap_beats_cluster * 100.0
    );
    Ok(())
}

pub fn train(cfg: &RunConfig, manifest: &Path, out: &Path, loss_csv: Option<PathBuf>) -> Result<(), CliError> {
    let corpus = load_corpus(manifest).map_err(|e| CliError::input(format!("{}: {e}", manifest.display())))?;
    let streams: Vec<Vec<FrameEmbedding>> = corpus.into_iter().map(|s| s.frames).filter(|f| !f.is_empty()).collect();
    let Some(dim) = streams.first().and_then(|s| s.first()).map(|f| f.dim()) else {
        return Err(CliError::config(format!("{}: corpus is empty", manifest.display())));
    };
    let config = cfg.ees_config(dim);
    config.validate()?;
    let report = ees_core::train_predictor(&streams, &config, cfg.epochs)?;
    let bytes = Checkpoint { predictor: report.state.clone(), attention: None }.to_bytes();
    fs::write(out, bytes).map_err(with_path(out))?;
    let csv_path = loss_csv.unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".loss.csv");
        PathBuf::from(p)
    });
    fs::write(&csv_path, report.loss_csv()).map_err(with_path(&csv_path))?;
    Ok(())
}

pub fn generate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let params = cfg.corpus_params();
    let corpus = params.generate()?;
    let manifest = write_corpus(out, &corpus, Some(&params))?;
    eprintln!("wrote {} streams to {}", corpus.len(), manifest.display());
    Ok(())
}
