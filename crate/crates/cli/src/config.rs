//! Layered run configuration: defaults < config file < flags < `EES_*` env.
//!
//! Config files are flat `key = value` lines; `#` starts a comment. Lists are
//! comma separated and may be wrapped in brackets:
//!
//! ```text
//! # three levels, looser top
//! layers = 3
//! threshold = [0.4, 0.4, 0.6]
//! predictor = linear_ar
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ees_core::bench::DEFAULT_TOLERANCE;
use ees_core::engine::{DEFAULT_LEVELS, DEFAULT_THRESHOLD, DEFAULT_WINDOW_CAP};
use ees_core::hec::EssentialStrategy;
use ees_core::synth::baselines::DEFAULT_SIM_THRESHOLD;
use ees_core::synth::corpus::{CorpusParams, DEFAULT_DIM, DEFAULT_SEPARATION, DEFAULT_STREAMS};
use ees_core::synth::CorpusKind;
use ees_core::{EesConfig, PredictorKind};

pub const KEYS: &[&str] = &[
    "layers",
    "threshold",
    "window_cap",
    "predictor",
    "hidden",
    "learning_rate",
    "online_learning",
    "checkpoint",
    "essential",
    "emit_embeddings",
    "seed",
    "attention_scale",
    "sim_threshold",
    "tolerance",
    "corpus",
    "streams",
    "dim",
    "frames",
    "noise_sigma",
    "drift_rate",
    "separation",
    "epochs",
];

fn canonical_key(raw: &str) -> Option<&'static str> {
    let k = raw.trim().to_ascii_lowercase().replace('-', "_");
    let k = match k.as_str() {
        "levels" => "layers",
        "thresholds" => "threshold",
        other => other,
    };
    KEYS.iter().copied().find(|c| *c == k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    File,
    Flag,
    Env,
}

/// Raw string values by key, later layers overwriting earlier ones.
#[derive(Debug, Clone, Default)]
pub struct Layers {
    values: BTreeMap<&'static str, (String, Source)>,
}

impl Layers {
    pub fn set(&mut self, key: &str, value: impl Into<String>, source: Source) -> Result<(), String> {
        let k = canonical_key(key).ok_or_else(|| format!("unknown configuration key {key:?}"))?;
        self.values.insert(k, (value.into(), source));
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        self.load_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn load_str(&mut self, text: &str) -> Result<(), String> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            self.set(k, v.trim(), Source::File).map_err(|e| format!("line {}: {e}", n + 1))?;
        }
        Ok(())
    }

    /// Applies every `EES_<KEY>` variable that names a known key.
    pub fn load_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) {
        for (name, value) in vars {
            if let Some(rest) = name.strip_prefix("EES_") {
                let _ = self.set(rest, value, Source::Env);
            }
        }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    pub fn resolve(&self) -> Result<RunConfig, String> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.trim().parse::<T>().map_err(|e| format!("{key} = {v:?}: {e}"))
        }
        fn flag(key: &str, v: &str) -> Result<bool, String> {
            match v.trim().to_ascii_lowercase().as_str() {
                "1" | "true" | "yes" | "on" => Ok(true),
                "0" | "false" | "no" | "off" => Ok(false),
                _ => Err(format!("{key} = {v:?}: expected true or false")),
            }
        }
        let mut c = RunConfig::default();
        for (&key, (v, _)) in &self.values {
            match key {
                "layers" => c.layers = parse(key, v)?,
                "threshold" => {
                    let list = v.trim().trim_start_matches('[').trim_end_matches(']');
                    c.thresholds = list
                        .split(',')
                        .map(|x| parse::<f64>(key, x))
                        .collect::<Result<_, _>>()?;
                }
                "window_cap" => c.window_cap = parse(key, v)?,
                "predictor" => c.predictor = parse::<PredictorKind>(key, v)?,
                "hidden" => c.hidden = Some(parse(key, v)?),
                "learning_rate" => c.learning_rate = Some(parse(key, v)?),
                "online_learning" => c.online_learning = flag(key, v)?,
                "checkpoint" => c.checkpoint = Some(PathBuf::from(v.trim())),
                "essential" => c.essential = parse::<EssentialStrategy>(key, v)?,
                "emit_embeddings" => c.emit_embeddings = flag(key, v)?,
                "seed" => c.seed = parse(key, v)?,
                "attention_scale" => c.attention_scale = Some(parse(key, v)?),
                "sim_threshold" => c.sim_threshold = parse(key, v)?,
                "tolerance" => c.tolerance = parse(key, v)?,
                "corpus" => c.corpus = parse::<CorpusKind>(key, v)?,
                "streams" => c.streams = parse(key, v)?,
                "dim" => c.dim = parse(key, v)?,
                "frames" => c.frames = Some(parse(key, v)?),
                "noise_sigma" => c.noise_sigma = Some(parse(key, v)?),
                "drift_rate" => c.drift_rate = Some(parse(key, v)?),
                "separation" => c.separation = parse(key, v)?,
                "epochs" => c.epochs = parse(key, v)?,
                _ => unreachable!("canonical_key only yields known keys"),
            }
        }
        if let EssentialStrategy::Random { .. } = c.essential {
            c.essential = EssentialStrategy::Random { seed: c.seed };
        }
        c.explicit = self.values.keys().copied().collect();
        if self.get("threshold").is_some() {
            c.broadcast_thresholds()?;
        } else {
            c.thresholds = vec![DEFAULT_THRESHOLD; c.layers];
        }
        Ok(c)
    }
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub layers: usize,
    pub thresholds: Vec<f64>,
    pub window_cap: usize,
    pub predictor: PredictorKind,
    pub hidden: Option<usize>,
    pub learning_rate: Option<f64>,
    pub online_learning: bool,
    pub checkpoint: Option<PathBuf>,
    pub essential: EssentialStrategy,
    pub emit_embeddings: bool,
    pub seed: u64,
    pub attention_scale: Option<f64>,
    pub sim_threshold: f64,
    pub tolerance: u64,
    pub corpus: CorpusKind,
    pub streams: usize,
    pub dim: usize,
    pub frames: Option<usize>,
    pub noise_sigma: Option<f64>,
    pub drift_rate: Option<f64>,
    pub separation: f64,
    pub epochs: usize,
    /// Keys set by any layer above the defaults.
    pub explicit: BTreeSet<&'static str>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            layers: DEFAULT_LEVELS,
            thresholds: vec![DEFAULT_THRESHOLD; DEFAULT_LEVELS],
            window_cap: DEFAULT_WINDOW_CAP,
            predictor: PredictorKind::MeanPoolIdentity,
            hidden: None,
            learning_rate: None,
            online_learning: false,
            checkpoint: None,
            essential: EssentialStrategy::MaxError,
            emit_embeddings: false,
            seed: 0,
            attention_scale: None,
            sim_threshold: DEFAULT_SIM_THRESHOLD,
            tolerance: DEFAULT_TOLERANCE,
            corpus: CorpusKind::Clean,
            streams: DEFAULT_STREAMS,
            dim: DEFAULT_DIM,
            frames: None,
            noise_sigma: None,
            drift_rate: None,
            separation: DEFAULT_SEPARATION,
            epochs: 1,
            explicit: BTreeSet::new(),
        }
    }
}

impl RunConfig {
    fn broadcast_thresholds(&mut self) -> Result<(), String> {
        match self.thresholds.len() {
            1 => self.thresholds = vec![self.thresholds[0]; self.layers],
            n if n == self.layers => {}
            n => return Err(format!("{n} thresholds given for {} layers", self.layers)),
        }
        Ok(())
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Engine configuration for a stream of dimension `dim`.
    pub fn ees_config(&self, dim: usize) -> EesConfig {
        let mut c = EesConfig::with_predictor(dim, self.predictor)
            .levels(self.layers)
            .thresholds(self.thresholds.clone())
            .window_cap(self.window_cap);
        if let Some(h) = self.hidden {
            c.predictor.hidden = h;
        }
        if let Some(lr) = self.learning_rate {
            c.predictor.learning_rate = lr;
        }
        c.predictor.seed = self.seed;
        c.online_learning = self.online_learning;
        c
    }

    pub fn corpus_params(&self) -> CorpusParams {
        let mut p = CorpusParams::new(self.corpus, self.seed);
        p.streams = self.streams;
        p.dim = self.dim;
        p.separation = self.separation;
        if let Some(f) = self.frames {
            p.frames = f;
        }
        if let Some(s) = self.noise_sigma {
            p.noise_sigma = s;
        }
        if let Some(r) = self.drift_rate {
            p.drift_rate = r;
        }
        p
    }
}
