//! Toy audio and text encoders producing feature sequences plus a
//! mean-pooled latent.

mod audio;
pub mod layers;
mod text;

use serde::{Deserialize, Serialize};

pub use audio::{required_waveform_len, AudioEncoder};
pub use text::{sinusoidal_positions, TextEncoder};

use crate::numcore::{GeluMode, NumError, RealArray, Var};

pub const DEFAULT_SAMPLE_RATE: u32 = 44_100;

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("waveform has {len} samples; the convolution stack needs at least {required}")]
    TooShort { len: usize, required: usize },
    #[error("token id {token} outside vocabulary of size {size}")]
    OutOfVocabulary { token: usize, size: usize },
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("invalid waveform: {0}")]
    Waveform(String),
}

/// Mono audio in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, EncoderError> {
        if sample_rate == 0 {
            return Err(EncoderError::Waveform("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(EncoderError::Waveform(format!("sample {i} is not finite")));
        }
        if let Some(i) = samples.iter().position(|s| s.abs() > 1.0) {
            return Err(EncoderError::Waveform(format!(
                "sample {i} = {} exceeds unit amplitude",
                samples[i]
            )));
        }
        Ok(Self { samples, sample_rate })
    }

    /// Builds a waveform from arbitrary finite samples, scaling down so the
    /// peak is at most 1.
    pub fn normalized(mut samples: Vec<f64>, sample_rate: u32) -> Result<Self, EncoderError> {
        let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if peak > 1.0 {
            for s in &mut samples {
                *s /= peak;
            }
        }
        Self::new(samples, sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    Bengali,
    English,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<usize>,
    pub language: Language,
}

impl TokenSequence {
    pub fn new(tokens: Vec<usize>, language: Language) -> Self {
        Self { tokens, language }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Speech,
    Text,
    Fused,
}

/// `T×d` feature matrix tagged with its modality.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub values: RealArray,
    pub modality: Modality,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn width(&self) -> usize {
        self.values.cols()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub width: usize,
    pub blocks: usize,
    pub heads: usize,
    pub ff_width: usize,
    /// Audio only.
    pub conv_kernels: Vec<usize>,
    /// Audio only.
    pub conv_strides: Vec<usize>,
    /// Text only.
    pub vocab_size: usize,
    pub dropout: f64,
    pub layer_norm_eps: f64,
    pub gelu: GeluMode,
    pub seed: u64,
}

impl EncoderConfig {
    /// Front-end sized so a 1.3 s clip at 44.1 kHz yields 68 frames.
    pub fn audio_default() -> Self {
        Self {
            width: 32,
            blocks: 2,
            heads: 4,
            ff_width: 64,
            conv_kernels: vec![400, 4, 3],
            conv_strides: vec![400, 2, 1],
            vocab_size: 0,
            dropout: 0.1,
            layer_norm_eps: 1e-5,
            gelu: GeluMode::Exact,
            seed: 1,
        }
    }

    pub fn text_default(vocab_size: usize) -> Self {
        Self {
            conv_kernels: Vec::new(),
            conv_strides: Vec::new(),
            vocab_size,
            seed: 2,
            ..Self::audio_default()
        }
    }

    pub fn validate_common(&self) -> Result<(), EncoderError> {
        if self.width == 0 || self.heads == 0 || !self.width.is_multiple_of(self.heads) {
            return Err(EncoderError::Config(format!(
                "width {} must be a positive multiple of heads {}",
                self.width, self.heads
            )));
        }
        if self.ff_width == 0 {
            return Err(EncoderError::Config("ff_width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(EncoderError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.layer_norm_eps <= 0.0 {
            return Err(EncoderError::Config("layer_norm_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn validate_audio(&self) -> Result<(), EncoderError> {
        self.validate_common()?;
        if self.conv_kernels.is_empty() || self.conv_kernels.len() != self.conv_strides.len() {
            return Err(EncoderError::Config(
                "conv_kernels and conv_strides must be nonempty and of equal length".into(),
            ));
        }
        if self.conv_kernels.iter().chain(&self.conv_strides).any(|&v| v == 0) {
            return Err(EncoderError::Config("kernels and strides must be >= 1".into()));
        }
        Ok(())
    }

    pub fn validate_text(&self) -> Result<(), EncoderError> {
        self.validate_common()?;
        if self.vocab_size == 0 {
            return Err(EncoderError::Config("vocab_size must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn block_shape(&self) -> layers::BlockShape {
        layers::BlockShape {
            width: self.width,
            heads: self.heads,
            ff_width: self.ff_width,
            eps: self.layer_norm_eps,
            gelu: self.gelu,
            dropout: self.dropout,
        }
    }
}

/// Graph-level encoder output.
pub struct Encoded {
    /// `[T×d]` sequence after the final block.
    pub features: Var,
    /// `[d]` mean over positions.
    pub pooled: Var,
    /// Attention matrices of every block, every head.
    pub attention: Vec<Var>,
}

#[cfg(test)]
pub(crate) mod tests;
