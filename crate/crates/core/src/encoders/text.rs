use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::TransformerBlock;
use super::{EncoderConfig, EncoderError, Encoded, FeatureSequence, Modality, TokenSequence};
use crate::numcore::{Graph, ParamId, ParamStore, RealArray, Session};

/// Token embedding plus fixed sinusoidal positions, then transformer blocks.
#[derive(Clone, Debug)]
pub struct TextEncoder {
    pub config: EncoderConfig,
    pub embedding: ParamId,
    pub blocks: Vec<TransformerBlock>,
}

/// `PE[t, 2i] = sin(t / 10000^(2i/d))`, `PE[t, 2i+1] = cos(...)`.
pub fn sinusoidal_positions(len: usize, width: usize) -> RealArray {
    let mut data = vec![0.0; len * width];
    for t in 0..len {
        for j in 0..width {
            let i = (j / 2) as f64;
            let angle = t as f64 / 10_000f64.powf(2.0 * i / width as f64);
            data[t * width + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    RealArray::new(vec![len, width], data).expect("finite positions")
}

impl TextEncoder {
    pub fn new(store: &mut ParamStore, name: &str, config: EncoderConfig) -> Result<Self, EncoderError> {
        config.validate_text()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let embedding = store.add(
            format!("{name}.embedding"),
            RealArray::randn(&[config.vocab_size, config.width], 1.0, &mut rng),
        );
        let blocks = (0..config.blocks)
            .map(|i| TransformerBlock::new(store, &format!("{name}.block{i}"), config.block_shape(), &mut rng))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            config,
            embedding,
            blocks,
        })
    }

    pub fn forward(&self, s: &mut Session, t: &TokenSequence) -> Result<Encoded, EncoderError> {
        if t.is_empty() {
            return Err(EncoderError::Config("empty token sequence".into()));
        }
        if let Some(&token) = t.tokens.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(EncoderError::OutOfVocabulary {
                token,
                size: self.config.vocab_size,
            });
        }
        let table = s.p(self.embedding);
        let emb = s.graph.gather(table, &t.tokens)?;
        let pos = s.graph.constant(sinusoidal_positions(t.len(), self.config.width));
        let mut x = s.graph.add(emb, pos)?;
        x = s.dropout(x, self.config.dropout)?;
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

    pub fn encode(&self, store: &ParamStore, t: &TokenSequence) -> Result<(FeatureSequence, RealArray), EncoderError> {
        let mut g = Graph::new();
        let mut s = Session::eval(&mut g, store);
        let enc = self.forward(&mut s, t)?;
        Ok((
            FeatureSequence {
                values: g.value(enc.features).clone(),
                modality: Modality::Text,
            },
            g.value(enc.pooled).clone(),
        ))
    }
}
