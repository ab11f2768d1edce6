use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{LayerNorm, Linear, TransformerBlock};
use super::{EncoderConfig, EncoderError, Encoded, FeatureSequence, Modality, Waveform};
use crate::numcore::{conv_output_len, Graph, ParamStore, RealArray, Session};

/// One strided 1-D convolution expressed as framing + projection, followed by
/// GELU and layer norm.
#[derive(Clone, Debug)]
pub struct ConvLayer {
    pub kernel: usize,
    pub stride: usize,
    pub projection: Linear,
    pub norm: LayerNorm,
}

/// Convolutional positional front-end over raw samples, then transformer
/// blocks.
#[derive(Clone, Debug)]
pub struct AudioEncoder {
    pub config: EncoderConfig,
    pub convs: Vec<ConvLayer>,
    pub blocks: Vec<TransformerBlock>,
}

/// Smallest input length for which every convolution yields at least one frame.
pub fn required_waveform_len(kernels: &[usize], strides: &[usize]) -> usize {
    kernels
        .iter()
        .zip(strides)
        .rev()
        .fold(1, |needed_out, (&k, &s)| (needed_out - 1) * s + k)
}

impl AudioEncoder {
    pub fn new(store: &mut ParamStore, name: &str, config: EncoderConfig) -> Result<Self, EncoderError> {
        config.validate_audio()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut channels = 1;
        let convs = config
            .conv_kernels
            .iter()
            .zip(&config.conv_strides)
            .enumerate()
            .map(|(i, (&kernel, &stride))| {
                let layer = ConvLayer {
                    kernel,
                    stride,
                    projection: Linear::new(store, &format!("{name}.conv{i}"), kernel * channels, config.width, &mut rng),
                    norm: LayerNorm::new(store, &format!("{name}.conv{i}.ln"), config.width, config.layer_norm_eps),
                };
                channels = config.width;
                layer
            })
            .collect();
        let blocks = (0..config.blocks)
            .map(|i| TransformerBlock::new(store, &format!("{name}.block{i}"), config.block_shape(), &mut rng))
            .collect::<Result<_, _>>()?;
        Ok(Self { config, convs, blocks })
    }

    pub fn required_len(&self) -> usize {
        required_waveform_len(&self.config.conv_kernels, &self.config.conv_strides)
    }

    /// Frame count produced for an input of `len` samples.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        self.convs
            .iter()
            .try_fold(len, |l, c| conv_output_len(l, c.kernel, c.stride))
    }

    /// Convolutional front-end only: `[T×d]` features.
    pub fn positional_encode(&self, s: &mut Session, w: &Waveform) -> Result<crate::numcore::Var, EncoderError> {
        let required = self.required_len();
        if w.len() < required {
            return Err(EncoderError::TooShort {
                len: w.len(),
                required,
            });
        }
        let input = RealArray::new(vec![w.len(), 1], w.samples().to_vec())?;
        let mut x = s.graph.constant(input);
        for conv in &self.convs {
            let frames = s.graph.frames(x, conv.kernel, conv.stride)?;
            let h = conv.projection.forward(s, frames)?;
            let h = s.graph.gelu(h, self.config.gelu)?;
            x = conv.norm.forward(s, h)?;
        }
        Ok(x)
    }

    pub fn forward(&self, s: &mut Session, w: &Waveform) -> Result<Encoded, EncoderError> {
        let mut x = self.positional_encode(s, w)?;
        let mut attention = Vec::new();
        for block in &self.blocks {
            let out = block.forward(s, x)?;
            attention.extend(out.weights);
            x = out.output;
        }
        let pooled = s.graph.mean_rows(x);
        Ok(Encoded {
            features: x,
            pooled,
            attention,
        })
    }

    /// Evaluation-mode encoding to plain arrays.
    pub fn encode(&self, store: &ParamStore, w: &Waveform) -> Result<(FeatureSequence, RealArray), EncoderError> {
        let mut g = Graph::new();
        let mut s = Session::eval(&mut g, store);
        let enc = self.forward(&mut s, w)?;
        Ok((
            FeatureSequence {
                values: g.value(enc.features).clone(),
                modality: Modality::Speech,
            },
            g.value(enc.pooled).clone(),
        ))
    }
}
