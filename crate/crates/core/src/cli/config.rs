//! Flat `key = value` run configuration with dotted section prefixes.
//!
//! ```text
//! # comments and blank lines are ignored
//! seed = 7
//! data.dir = corpus
//! gen.counts = 25, 35, 25
//! model.variant = all
//! loss.alpha = 0.15
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{AugmentationConfig, GeneratorConfig, Split};
use crate::encoders::{EncoderConfig, Language};
use crate::fusion::FusionScheme;
use crate::model::{LossWeights, ModelConfig, ModelVariant, TrainConfig, DEFAULT_ALPHA_GRID};
use crate::numcore::GeluMode;
use crate::seed::derive;

use super::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Root of every random stream in the run.
    pub seed: u64,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub generator: GeneratorConfig,
    /// Variants trained or evaluated, in order.
    pub variants: Vec<ModelVariant>,
    /// Architecture shared by every variant; `variant` is overwritten per run.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augment: AugmentationConfig,
    pub eval_splits: Vec<Split>,
    pub grid: Vec<f64>,
    pub schemes: Vec<FusionScheme>,
    pub verify_seeds: u64,
}

fn english_vocab_size() -> usize {
    crate::data::Vocabulary::for_language(Language::English).len()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            generator: GeneratorConfig::default(),
            variants: vec![ModelVariant::BeatsXformer],
            model: ModelConfig::new(ModelVariant::BeatsXformer, english_vocab_size()),
            train: TrainConfig::default(),
            augment: AugmentationConfig::default(),
            eval_splits: vec![Split::Val, Split::Test],
            grid: DEFAULT_ALPHA_GRID.to_vec(),
            schemes: vec![FusionScheme::Xformer, FusionScheme::Otk],
            verify_seeds: 10,
        }
    }
}

/// Named seeds for each consumer, all derived from [`RunConfig::seed`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeds {
    pub generator: u64,
    pub model: u64,
    pub train: u64,
    pub augment: u64,
}

impl RunConfig {
    pub fn seeds(&self) -> Seeds {
        Seeds {
            generator: self.seed,
            model: derive(self.seed, &[1]),
            train: derive(self.seed, &[2]),
            augment: derive(self.seed, &[3]),
        }
    }

    /// Generator config with its seed taken from the run seed.
    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            seed: self.seeds().generator,
            ..self.generator.clone()
        }
    }

    pub fn model_config(&self, variant: ModelVariant) -> ModelConfig {
        ModelConfig {
            variant,
            seed: self.seeds().model,
            ..self.model.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seeds().train,
            ..self.train.clone()
        }
    }

    /// Checks every section against its own invariants.
    pub fn validate(&self) -> Result<(), CliError> {
        let v = |e: &dyn std::fmt::Display| CliError::Validation(e.to_string());
        self.generator.validate().map_err(|e| v(&e))?;
        if self.variants.is_empty() {
            return Err(CliError::Validation("model.variant lists no variant".into()));
        }
        for &variant in &self.variants {
            self.model_config(variant).validate().map_err(|e| v(&e))?;
        }
        self.train.validate().map_err(|e| v(&e))?;
        self.augment.validate().map_err(|e| v(&e))?;
        if self.eval_splits.is_empty() {
            return Err(CliError::Validation("eval.splits lists no split".into()));
        }
        if self.grid.is_empty() || self.schemes.is_empty() {
            return Err(CliError::Validation("ablate.grid and ablate.schemes must be nonempty".into()));
        }
        for &a in &self.grid {
            LossWeights::ablation(a).map_err(|e| v(&e))?;
        }
        for &scheme in &self.schemes {
            self.model_config(ModelVariant::beats(scheme)).validate().map_err(|e| v(&e))?;
        }
        if self.verify_seeds == 0 {
            return Err(CliError::Validation("verify.seeds must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|ParseError { line, msg }| CliError::Validation(format!("{}:{line}: {msg}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |msg: String| ParseError { line, msg };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found {content:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key}")));
            }
            cfg.set(key, value).map_err(|m| err(format!("{key}: {m}")))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let (section, field) = key.split_once('.').unwrap_or(("", key));
        match section {
            "" => match field {
                "seed" => self.seed = scalar(value)?,
                _ => return unknown(key),
            },
            "data" | "out" if field == "dir" => {
                let dir = PathBuf::from(value);
                if section == "data" {
                    self.data_dir = dir
                } else {
                    self.out_dir = dir
                }
            }
            "gen" => self.set_generator(field, value)?,
            "model" => match field {
                "variant" => {
                    self.variants = if value == "all" {
                        ModelVariant::ALL.to_vec()
                    } else {
                        list(value)?
                    }
                }
                "head_hidden" => self.model.head_hidden = scalar(value)?,
                _ => return unknown(key),
            },
            "audio" => set_encoder(&mut self.model.audio, field, value, true)?,
            "text" => set_encoder(&mut self.model.text, field, value, false)?,
            "fusion" => {
                let f = &mut self.model.fusion;
                match field {
                    "blocks" => f.blocks = scalar(value)?,
                    "heads" => f.heads = scalar(value)?,
                    "ff_width" => f.ff_width = scalar(value)?,
                    "references" => f.references = scalar(value)?,
                    "dropout" => f.dropout = scalar(value)?,
                    "layer_norm_eps" => f.layer_norm_eps = scalar(value)?,
                    "gelu" => f.gelu = gelu(value)?,
                    "sinkhorn_epsilon" => f.sinkhorn.epsilon = scalar(value)?,
                    "sinkhorn_tol" => f.sinkhorn.tol = scalar(value)?,
                    "sinkhorn_max_iter" => f.sinkhorn.max_iter = scalar(value)?,
                    _ => return unknown(key),
                }
            }
            "loss" => {
                let w = &mut self.train.weights;
                match field {
                    "alpha" => w.alpha = scalar(value)?,
                    "beta" => w.beta = scalar(value)?,
                    "gamma" => w.gamma = scalar(value)?,
                    _ => return unknown(key),
                }
            }
            "train" => {
                let t = &mut self.train;
                match field {
                    "epochs" => t.epochs = scalar(value)?,
                    "batch_size" => t.batch_size = scalar(value)?,
                    "learning_rate" => t.learning_rate = scalar(value)?,
                    "adam_beta1" => t.adam.beta1 = scalar(value)?,
                    "adam_beta2" => t.adam.beta2 = scalar(value)?,
                    "adam_eps" => t.adam.eps = scalar(value)?,
                    _ => return unknown(key),
                }
            }
            "augment" => {
                let a = &mut self.augment;
                match field {
                    "shift_ms" => a.shift_ms = pair(value)?,
                    "gain_db" => a.gain_db = pair(value)?,
                    "snr_db" => a.snr_db = optional_pair(value)?,
                    "synonym_prob" => a.synonym_prob = scalar(value)?,
                    "copies" => a.copies = scalar(value)?,
                    _ => return unknown(key),
                }
            }
            "eval" if field == "splits" => self.eval_splits = list(value)?,
            "ablate" => match field {
                "grid" => self.grid = list(value)?,
                "schemes" => self.schemes = list(value)?,
                _ => return unknown(key),
            },
            "verify" if field == "seeds" => self.verify_seeds = scalar(value)?,
            _ => return unknown(key),
        }
        Ok(())
    }

    fn set_generator(&mut self, field: &str, value: &str) -> Result<(), String> {
        let g = &mut self.generator;
        match field {
            "counts" => {
                let c: Vec<usize> = list(value)?;
                g.counts = c.try_into().map_err(|c: Vec<usize>| format!("expected 3 counts, found {}", c.len()))?;
            }
            "duration_secs" => g.duration_secs = scalar(value)?,
            "duration_jitter_secs" => g.duration_jitter_secs = scalar(value)?,
            "sample_rate" => g.sample_rate = scalar(value)?,
            "speaker_pitches" => g.speaker_pitches = list(value)?,
            "pitch_jitter" => g.pitch_jitter = scalar(value)?,
            "snr_db" => g.snr_db = optional_pair(value)?,
            "contour_jitter" => g.contour_jitter = scalar(value)?,
            "gesture_scale" => g.gesture_scale = pair(value)?,
            "marker_noise" => g.marker_noise = scalar(value)?,
            "ambiguity" => g.ambiguity = scalar(value)?,
            "val_fraction" => g.val_fraction = scalar(value)?,
            "test_fraction" => g.test_fraction = scalar(value)?,
            _ => return unknown(&format!("gen.{field}")),
        }
        Ok(())
    }
}

fn set_encoder(e: &mut EncoderConfig, field: &str, value: &str, audio: bool) -> Result<(), String> {
    match field {
        "width" => e.width = scalar(value)?,
        "blocks" => e.blocks = scalar(value)?,
        "heads" => e.heads = scalar(value)?,
        "ff_width" => e.ff_width = scalar(value)?,
        "dropout" => e.dropout = scalar(value)?,
        "layer_norm_eps" => e.layer_norm_eps = scalar(value)?,
        "gelu" => e.gelu = gelu(value)?,
        "conv_kernels" if audio => e.conv_kernels = list(value)?,
        "conv_strides" if audio => e.conv_strides = list(value)?,
        _ => return unknown(&format!("{}.{field}", if audio { "audio" } else { "text" })),
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn unknown<T>(key: &str) -> Result<T, String> {
    Err(format!("unknown key {key}"))
}

fn scalar<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| format!("cannot parse {value:?}: {e}"))
}

fn list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value.split(',').map(|v| scalar(v.trim())).collect()
}

fn pair(value: &str) -> Result<(f64, f64), String> {
    match list::<f64>(value)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        other => Err(format!("expected `min, max`, found {} values", other.len())),
    }
}

fn optional_pair(value: &str) -> Result<Option<(f64, f64)>, String> {
    if value == "none" {
        Ok(None)
    } else {
        pair(value).map(Some)
    }
}

fn gelu(value: &str) -> Result<GeluMode, String> {
    match value {
        "exact" => Ok(GeluMode::Exact),
        "tanh" => Ok(GeluMode::Tanh),
        _ => Err(format!("expected exact or tanh, found {value:?}")),
    }
}
