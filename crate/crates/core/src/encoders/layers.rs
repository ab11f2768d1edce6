//! Parameterized building blocks shared by the encoders and the fusion block.

use rand::Rng;

use crate::numcore::{GeluMode, NumError, ParamId, ParamStore, RealArray, Session, Var};

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    /// Weights `N(0, 1/fan_in)`, zero bias.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let std = 1.0 / (fan_in as f64).sqrt();
        Self {
            weight: store.add(format!("{name}.weight"), RealArray::randn(&[fan_in, fan_out], std, rng)),
            bias: store.add(format!("{name}.bias"), RealArray::zeros(&[fan_out])),
        }
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var, NumError> {
        let w = s.p(self.weight);
        let b = s.p(self.bias);
        let h = s.graph.matmul(x, w)?;
        s.graph.add_row(h, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, eps: f64) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), RealArray::filled(&[width], 1.0)),
            bias: store.add(format!("{name}.bias"), RealArray::zeros(&[width])),
            eps,
        }
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var, NumError> {
        let g = s.p(self.gain);
        let b = s.p(self.bias);
        s.graph.layer_norm(x, g, b, self.eps)
    }
}

/// Multi-head scaled dot-product attention with separate query and
/// key/value inputs; self-attention passes the same sequence twice.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub width: usize,
}

pub struct AttentionOutput {
    pub output: Var,
    /// One row-stochastic `[T_q × T_kv]` matrix per head.
    pub weights: Vec<Var>,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self, NumError> {
        if heads == 0 || !width.is_multiple_of(heads) {
            return Err(NumError::Contract(format!(
                "{name}: width {width} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            query: Linear::new(store, &format!("{name}.q"), width, width, rng),
            key: Linear::new(store, &format!("{name}.k"), width, width, rng),
            value: Linear::new(store, &format!("{name}.v"), width, width, rng),
            output: Linear::new(store, &format!("{name}.o"), width, width, rng),
            heads,
            width,
        })
    }

    pub fn forward(&self, s: &mut Session, queries: Var, keys_values: Var) -> Result<AttentionOutput, NumError> {
        for v in [queries, keys_values] {
            if s.graph.value(v).cols() != self.width {
                return Err(NumError::Dimension {
                    op: "attention",
                    lhs: vec![self.width],
                    rhs: s.graph.shape(v).to_vec(),
                });
            }
        }
        let q = self.query.forward(s, queries)?;
        let k = self.key.forward(s, keys_values)?;
        let v = self.value.forward(s, keys_values)?;
        let head_width = self.width / self.heads;
        let scale = 1.0 / (head_width as f64).sqrt();

        let mut heads = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * head_width, (h + 1) * head_width);
            let qh = s.graph.slice_cols(q, lo, hi)?;
            let kh = s.graph.slice_cols(k, lo, hi)?;
            let vh = s.graph.slice_cols(v, lo, hi)?;
            let kt = s.graph.transpose(kh);
            let scores = s.graph.matmul(qh, kt)?;
            let scores = s.graph.scale(scores, scale)?;
            let attn = s.graph.softmax_rows(scores)?;
            heads.push(s.graph.matmul(attn, vh)?);
            weights.push(attn);
        }
        let merged = if heads.len() == 1 {
            heads[0]
        } else {
            s.graph.concat_cols(&heads)?
        };
        let output = self.output.forward(s, merged)?;
        Ok(AttentionOutput { output, weights })
    }
}

/// Post-norm transformer block: attention sublayer then a GELU feed-forward
/// sublayer, each wrapped in residual + layer norm.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub norm2: LayerNorm,
    pub gelu: GeluMode,
    pub dropout: f64,
}

pub struct BlockOutput {
    pub output: Var,
    pub weights: Vec<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct BlockShape {
    pub width: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub eps: f64,
    pub gelu: GeluMode,
    pub dropout: f64,
}

impl TransformerBlock {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, shape: BlockShape, rng: &mut R) -> Result<Self, NumError> {
        Ok(Self {
            attention: MultiHeadAttention::new(store, &format!("{name}.attn"), shape.width, shape.heads, rng)?,
            norm1: LayerNorm::new(store, &format!("{name}.ln1"), shape.width, shape.eps),
            ff_in: Linear::new(store, &format!("{name}.ff1"), shape.width, shape.ff_width, rng),
            ff_out: Linear::new(store, &format!("{name}.ff2"), shape.ff_width, shape.width, rng),
            norm2: LayerNorm::new(store, &format!("{name}.ln2"), shape.width, shape.eps),
            gelu: shape.gelu,
            dropout: shape.dropout,
        })
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<BlockOutput, NumError> {
        let attn = self.attention.forward(s, x, x)?;
        let a = s.dropout(attn.output, self.dropout)?;
        let h = s.graph.add(x, a)?;
        let h = self.norm1.forward(s, h)?;
        let f = self.ff_in.forward(s, h)?;
        let f = s.graph.gelu(f, self.gelu)?;
        let f = self.ff_out.forward(s, f)?;
        let f = s.dropout(f, self.dropout)?;
        let out = s.graph.add(h, f)?;
        let output = self.norm2.forward(s, out)?;
        Ok(BlockOutput {
            output,
            weights: attn.weights,
        })
    }
}

/// Attention from one sequence into another followed by residual + layer norm.
#[derive(Clone, Debug)]
pub struct CrossAttention {
    pub attention: MultiHeadAttention,
    pub norm: LayerNorm,
}

impl CrossAttention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        heads: usize,
        eps: f64,
        rng: &mut R,
    ) -> Result<Self, NumError> {
        Ok(Self {
            attention: MultiHeadAttention::new(store, &format!("{name}.attn"), width, heads, rng)?,
            norm: LayerNorm::new(store, &format!("{name}.ln"), width, eps),
        })
    }

    pub fn forward(&self, s: &mut Session, queries: Var, keys_values: Var) -> Result<BlockOutput, NumError> {
        let attn = self.attention.forward(s, queries, keys_values)?;
        let h = s.graph.add(queries, attn.output)?;
        let output = self.norm.forward(s, h)?;
        Ok(BlockOutput {
            output,
            weights: attn.weights,
        })
    }
}

/// Two-layer classifier head: `Linear → GELU → Linear`.
#[derive(Clone, Debug)]
pub struct MlpHead {
    pub hidden: Linear,
    pub out: Linear,
    pub gelu: GeluMode,
}

impl MlpHead {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        classes: usize,
        gelu: GeluMode,
        rng: &mut R,
    ) -> Self {
        Self {
            hidden: Linear::new(store, &format!("{name}.fc1"), input, hidden, rng),
            out: Linear::new(store, &format!("{name}.fc2"), hidden, classes, rng),
            gelu,
        }
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var, NumError> {
        let h = self.hidden.forward(s, x)?;
        let h = s.graph.gelu(h, self.gelu)?;
        self.out.forward(s, h)
    }
}

/// Zeroes every attention projection so that all scores vanish.
pub fn zero_attention_scores(store: &mut ParamStore, attn: &MultiHeadAttention) {
    for id in [attn.query.weight, attn.query.bias, attn.key.weight, attn.key.bias] {
        let shape = store.get(id).shape().to_vec();
        *store.get_mut(id) = RealArray::zeros(&shape);
    }
}
