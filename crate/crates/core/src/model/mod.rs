//! The four classifier variants, the weighted joint loss, training and
//! evaluation.

mod ablation;
mod metrics;
mod train;

use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use ablation::{ablation_sweep, AblationCell, AblationTable, DEFAULT_ALPHA_GRID};
pub use metrics::{argmax, evaluate, ClassMetrics, ConfusionMatrix, Evaluation, Metrics};
pub use train::{train, AdamConfig, TrainConfig, TrainReport};

use crate::encoders::layers::MlpHead;
use crate::encoders::{AudioEncoder, EncoderConfig, EncoderError, Language, TokenSequence, Waveform};
use crate::fusion::{FusionConfig, FusionError, FusionScheme, FusionTransformer, OtkFusion};
use crate::numcore::{softmax_in_place, Graph, NumError, ParamStore, Session, Var};
use crate::seed;

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("invalid loss weights: {0}")]
    Weights(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed parameter file: {source}")]
    Serde {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeechActLabel {
    Request = 0,
    Question = 1,
    Order = 2,
}

impl SpeechActLabel {
    pub const ALL: [Self; NUM_CLASSES] = [Self::Request, Self::Question, Self::Order];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Request => "request",
            Self::Question => "question",
            Self::Order => "order",
        }
    }
}

impl std::fmt::Display for SpeechActLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpeechActLabel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown label {s:?}")))
    }
}

/// `(α, β, γ)` weighting the speech, fused and text losses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, ModelError> {
        let w = Self { alpha, beta, gamma };
        w.validate()?;
        Ok(w)
    }

    /// `α = γ`, `β = 1 − 2α`, with `α ∈ (0, 0.5)`.
    pub fn ablation(alpha: f64) -> Result<Self, ModelError> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(ModelError::Weights(format!(
                "ablation alpha must lie in (0, 0.5) so that beta = 1 - 2*alpha > 0, got {alpha}"
            )));
        }
        Self::new(alpha, 1.0 - 2.0 * alpha, alpha)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let parts = [self.alpha, self.beta, self.gamma];
        if parts.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ModelError::Weights(format!("weights must be finite and >= 0, got {self:?}")));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ModelError::Weights(format!("weights must sum to 1, got {total}")));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.15,
            beta: 0.7,
            gamma: 0.15,
        }
    }
}

/// `α·l_speech + β·l_fused + γ·l_text`.
pub fn joint_loss(w: &LossWeights, l_speech: f64, l_fused: f64, l_text: f64) -> Result<f64, ModelError> {
    w.validate()?;
    for (name, l) in [("speech", l_speech), ("fused", l_fused), ("text", l_text)] {
        if !l.is_finite() || l < 0.0 {
            return Err(ModelError::Weights(format!("{name} loss must be finite and >= 0, got {l}")));
        }
    }
    Ok(w.alpha * l_speech + w.beta * l_fused + w.gamma * l_text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    SpeechOnly,
    BimodalConcat,
    BeatsXformer,
    BeatsOtk,
}

impl ModelVariant {
    pub const ALL: [Self; 4] = [Self::SpeechOnly, Self::BimodalConcat, Self::BeatsXformer, Self::BeatsOtk];

    pub fn name(self) -> &'static str {
        match self {
            Self::SpeechOnly => "speech_only",
            Self::BimodalConcat => "bimodal_concat",
            Self::BeatsXformer => "beats_xformer",
            Self::BeatsOtk => "beats_otk",
        }
    }

    pub fn beats(scheme: FusionScheme) -> Self {
        match scheme {
            FusionScheme::Xformer => Self::BeatsXformer,
            FusionScheme::Otk => Self::BeatsOtk,
        }
    }

    pub fn scheme(self) -> Option<FusionScheme> {
        match self {
            Self::BeatsXformer => Some(FusionScheme::Xformer),
            Self::BeatsOtk => Some(FusionScheme::Otk),
            _ => None,
        }
    }

    pub fn uses_text(self) -> bool {
        self != Self::SpeechOnly
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelVariant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            ModelError::Config(format!(
                "unknown variant {s:?} (expected speech_only, bimodal_concat, beats_xformer or beats_otk)"
            ))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    pub audio: EncoderConfig,
    pub text: EncoderConfig,
    pub fusion: FusionConfig,
    pub head_hidden: usize,
    /// Every component seed is derived from this one.
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(variant: ModelVariant, vocab_size: usize) -> Self {
        Self {
            variant,
            audio: EncoderConfig::audio_default(),
            text: EncoderConfig::text_default(vocab_size),
            fusion: FusionConfig::default(),
            head_hidden: 32,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.audio.validate_audio()?;
        if self.variant.uses_text() {
            self.text.validate_text()?;
            if self.text.width != self.audio.width {
                return Err(ModelError::Config(format!(
                    "audio width {} and text width {} must match",
                    self.audio.width, self.text.width
                )));
            }
        }
        if self.variant.scheme().is_some() {
            self.fusion.validate(self.audio.width)?;
        }
        if self.head_hidden == 0 {
            return Err(ModelError::Config("head_hidden must be >= 1".into()));
        }
        Ok(())
    }
}

/// One training or evaluation item. The text encoder reads the English
/// token sequence (the latent-translation side of the pipeline).
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub waveform: Waveform,
    pub english: TokenSequence,
    pub label: SpeechActLabel,
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)] // one per model
enum FusedBranch {
    Xformer(FusionTransformer),
    Otk(OtkFusion),
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    audio: AudioEncoder,
    text: Option<crate::encoders::TextEncoder>,
    speech_head: Option<MlpHead>,
    text_head: Option<MlpHead>,
    /// Fused head for BeAts variants, concatenation head for bimodal_concat.
    joint_head: Option<MlpHead>,
    fused: Option<FusedBranch>,
}

/// Per-head cross-entropy values of one forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HeadLosses {
    pub speech: Option<f64>,
    pub fused: Option<f64>,
    pub text: Option<f64>,
}

pub struct ForwardOutput {
    /// Softmax of the prediction head.
    pub probabilities: [f64; NUM_CLASSES],
    /// Scalar training objective.
    pub loss: Var,
    pub head_losses: HeadLosses,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let audio_cfg = EncoderConfig {
            seed: seed::derive(config.seed, &[1]),
            ..config.audio.clone()
        };
        let audio = AudioEncoder::new(&mut store, "audio", audio_cfg)?;
        let text = if config.variant.uses_text() {
            let text_cfg = EncoderConfig {
                seed: seed::derive(config.seed, &[2]),
                ..config.text.clone()
            };
            Some(crate::encoders::TextEncoder::new(&mut store, "text", text_cfg)?)
        } else {
            None
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &[3]));
        let d = config.audio.width;
        let (h, gelu) = (config.head_hidden, config.audio.gelu);
        let beats = config.variant.scheme().is_some();
        let speech_head = (config.variant == ModelVariant::SpeechOnly || beats)
            .then(|| MlpHead::new(&mut store, "head.speech", d, h, NUM_CLASSES, gelu, &mut rng));
        let text_head = beats.then(|| MlpHead::new(&mut store, "head.text", d, h, NUM_CLASSES, gelu, &mut rng));
        let fused = match config.variant.scheme() {
            Some(FusionScheme::Xformer) => Some(FusedBranch::Xformer(FusionTransformer::new(
                &mut store,
                "fusion",
                d,
                &config.fusion,
                &mut rng,
            )?)),
            Some(FusionScheme::Otk) => Some(FusedBranch::Otk(OtkFusion::new(&mut store, "fusion", d, &config.fusion, &mut rng)?)),
            None => None,
        };
        let joint_head = match (&fused, config.variant) {
            (Some(FusedBranch::Xformer(_)), _) => Some(MlpHead::new(&mut store, "head.fused", d, h, NUM_CLASSES, gelu, &mut rng)),
            (Some(FusedBranch::Otk(o)), _) => Some(MlpHead::new(
                &mut store,
                "head.fused",
                o.embedding_width(),
                h,
                NUM_CLASSES,
                gelu,
                &mut rng,
            )),
            (None, ModelVariant::BimodalConcat) => {
                Some(MlpHead::new(&mut store, "head.concat", 2 * d, h, NUM_CLASSES, gelu, &mut rng))
            }
            (None, _) => None,
        };
        Ok(Self {
            config,
            store,
            audio,
            text,
            speech_head,
            text_head,
            joint_head,
            fused,
        })
    }

    pub fn variant(&self) -> ModelVariant {
        self.config.variant
    }

    /// Builds the forward graph for one example. `s` decides train/eval mode.
    pub fn forward(
        &self,
        s: &mut Session,
        waveform: &Waveform,
        english: &TokenSequence,
        label: SpeechActLabel,
        weights: &LossWeights,
    ) -> Result<ForwardOutput, ModelError> {
        let y = label.index();
        let a = self.audio.forward(s, waveform)?;
        let mut losses = HeadLosses::default();
        let (logits, loss) = match self.config.variant {
            ModelVariant::SpeechOnly => {
                let logits = self.speech_head.as_ref().expect("speech head").forward(s, a.pooled)?;
                let l = s.graph.cross_entropy(logits, y)?;
                losses.speech = Some(s.graph.value(l).item());
                (logits, l)
            }
            ModelVariant::BimodalConcat => {
                let t = self.text_forward(s, english)?;
                let z = s.graph.concat_cols(&[a.pooled, t.pooled])?;
                let logits = self.joint_head.as_ref().expect("concat head").forward(s, z)?;
                let l = s.graph.cross_entropy(logits, y)?;
                losses.fused = Some(s.graph.value(l).item());
                (logits, l)
            }
            ModelVariant::BeatsXformer | ModelVariant::BeatsOtk => {
                weights.validate()?;
                let t = self.text_forward(s, english)?;
                let fused = match self.fused.as_ref().expect("fusion branch") {
                    FusedBranch::Xformer(f) => f.forward(s, a.features, t.features)?.cls,
                    FusedBranch::Otk(f) => f.forward(s, a.features, t.features, a.pooled, t.pooled)?.embedding,
                };
                let logits = self.joint_head.as_ref().expect("fused head").forward(s, fused)?;
                let ls_logits = self.speech_head.as_ref().expect("speech head").forward(s, a.pooled)?;
                let lt_logits = self.text_head.as_ref().expect("text head").forward(s, t.pooled)?;
                let lf = s.graph.cross_entropy(logits, y)?;
                let ls = s.graph.cross_entropy(ls_logits, y)?;
                let lt = s.graph.cross_entropy(lt_logits, y)?;
                losses.speech = Some(s.graph.value(ls).item());
                losses.fused = Some(s.graph.value(lf).item());
                losses.text = Some(s.graph.value(lt).item());
                let ws = s.graph.scale(ls, weights.alpha)?;
                let wf = s.graph.scale(lf, weights.beta)?;
                let wt = s.graph.scale(lt, weights.gamma)?;
                let total = s.graph.add(ws, wf)?;
                (logits, s.graph.add(total, wt)?)
            }
        };
        let mut probabilities = [0.0; NUM_CLASSES];
        probabilities.copy_from_slice(s.graph.value(logits).data());
        softmax_in_place(&mut probabilities);
        Ok(ForwardOutput {
            probabilities,
            loss,
            head_losses: losses,
        })
    }

    fn text_forward(&self, s: &mut Session, english: &TokenSequence) -> Result<crate::encoders::Encoded, ModelError> {
        if english.language != Language::English {
            return Err(ModelError::Config("the text encoder reads English token sequences".into()));
        }
        Ok(self.text.as_ref().expect("text encoder").forward(s, english)?)
    }

    /// Evaluation-mode class probabilities from the prediction head.
    pub fn predict(&self, waveform: &Waveform, english: &TokenSequence) -> Result<[f64; NUM_CLASSES], ModelError> {
        let mut g = Graph::new();
        let mut s = Session::eval(&mut g, &self.store);
        // The label only feeds the loss nodes, which are discarded here.
        let out = self.forward(&mut s, waveform, english, SpeechActLabel::Request, &LossWeights::default())?;
        Ok(out.probabilities)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let file = SavedModel {
            config: self.config.clone(),
            params: self.store.clone(),
        };
        let json = serde_json::to_string(&file).map_err(|source| ModelError::Serde {
            path: path.display().to_string(),
            source,
        })?;
        std::fs::write(path, json).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: SavedModel = serde_json::from_str(&text).map_err(|source| ModelError::Serde {
            path: path.display().to_string(),
            source,
        })?;
        let mut model = Self::new(file.config)?;
        if file.params.len() != model.store.len()
            || model.store.iter().zip(file.params.iter()).any(|((_, a), (_, b))| a.name != b.name)
        {
            return Err(ModelError::Config(format!(
                "{}: parameter names do not match the stored config",
                path.display()
            )));
        }
        model.store.set_values(file.params.values())?;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct SavedModel {
    config: ModelConfig,
    params: ParamStore,
}

#[cfg(test)]
mod tests;
