//! Cross-modal fusion: a CLS-token fusion transformer and optimal-transport
//! kernel pooling against learned references.

mod sinkhorn;

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use sinkhorn::{
    exact_ot_oracle, sinkhorn, sinkhorn_graph, ExactTransport, SinkhornConfig, SinkhornTrace, TransportPlan,
    MAX_ORACLE_SIZE,
};

use crate::encoders::layers::{BlockShape, CrossAttention, TransformerBlock};
use crate::encoders::{FeatureSequence, Modality};
use crate::numcore::{GeluMode, Graph, NumError, ParamId, ParamStore, RealArray, Session, Var};

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("sinkhorn produced non-finite scalings at iteration {iteration} with epsilon = {epsilon:e}")]
    Numerical { epsilon: f64, iteration: usize },
    #[error("exact transport oracle refuses n = {n} (limit {max})")]
    TooLarge { n: usize, max: usize },
    #[error("invalid fusion config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionScheme {
    #[default]
    Xformer,
    Otk,
}

impl FromStr for FusionScheme {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "xformer" => Ok(Self::Xformer),
            "otk" => Ok(Self::Otk),
            other => Err(FusionError::Config(format!("unknown fusion scheme {other:?} (expected xformer or otk)"))),
        }
    }
}

impl std::fmt::Display for FusionScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Xformer => "xformer",
            Self::Otk => "otk",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Fusion transformer depth `M`.
    pub blocks: usize,
    pub heads: usize,
    pub ff_width: usize,
    /// Reference count `p` per OTK branch.
    pub references: usize,
    pub sinkhorn: SinkhornConfig,
    pub dropout: f64,
    pub layer_norm_eps: f64,
    pub gelu: GeluMode,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            blocks: 1,
            heads: 4,
            ff_width: 64,
            references: 8,
            sinkhorn: SinkhornConfig::default(),
            dropout: 0.1,
            layer_norm_eps: 1e-5,
            gelu: GeluMode::Exact,
            seed: 3,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self, width: usize) -> Result<(), FusionError> {
        if self.blocks == 0 {
            return Err(FusionError::Config("fusion blocks must be >= 1".into()));
        }
        if self.heads == 0 || !width.is_multiple_of(self.heads) {
            return Err(FusionError::Config(format!(
                "width {width} must be a multiple of fusion heads {}",
                self.heads
            )));
        }
        if self.ff_width == 0 || self.references == 0 {
            return Err(FusionError::Config("ff_width and references must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) || self.layer_norm_eps <= 0.0 {
            return Err(FusionError::Config("dropout must be in [0, 1) and eps > 0".into()));
        }
        self.sinkhorn.validate()
    }

    fn block_shape(&self, width: usize) -> BlockShape {
        BlockShape {
            width,
            heads: self.heads,
            ff_width: self.ff_width,
            eps: self.layer_norm_eps,
            gelu: self.gelu,
            dropout: self.dropout,
        }
    }
}

/// `[CLS; audio; text]` with the audio/text split recorded.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedSequence {
    pub values: RealArray,
    /// Row index of the first text token, `1 + T_a`.
    pub boundary: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct FusedVar {
    pub values: Var,
    pub boundary: usize,
}

fn check_width(op: &'static str, expected: usize, got: &[usize], cols: usize) -> Result<(), NumError> {
    if cols != expected {
        return Err(NumError::Dimension {
            op,
            lhs: vec![expected],
            rhs: got.to_vec(),
        });
    }
    Ok(())
}

/// Graph form of [`concat_with_cls`]; `cls`, `audio_type` and `text_type`
/// are `[d]` vectors.
pub fn concat_with_cls_graph(
    g: &mut Graph,
    audio: Var,
    text: Var,
    cls: Var,
    audio_type: Var,
    text_type: Var,
) -> Result<FusedVar, FusionError> {
    let d = g.value(cls).len();
    for v in [audio, text, audio_type, text_type] {
        check_width("concat_with_cls", d, g.shape(v), g.value(v).cols())?;
    }
    let t_a = g.value(audio).rows();
    let a = g.add_row(audio, audio_type)?;
    let t = g.add_row(text, text_type)?;
    let c = g.reshape(cls, vec![1, d])?;
    let values = g.concat_rows(&[c, a, t])?;
    Ok(FusedVar {
        values,
        boundary: 1 + t_a,
    })
}

pub fn concat_with_cls(
    audio: &FeatureSequence,
    text: &FeatureSequence,
    cls: &RealArray,
    audio_type: &RealArray,
    text_type: &RealArray,
) -> Result<FusedSequence, FusionError> {
    let mut g = Graph::new();
    let vars: Vec<Var> = [&audio.values, &text.values, cls, audio_type, text_type]
        .into_iter()
        .map(|v| g.constant(v.clone()))
        .collect();
    let fused = concat_with_cls_graph(&mut g, vars[0], vars[1], vars[2], vars[3], vars[4])?;
    Ok(FusedSequence {
        values: g.value(fused.values).clone(),
        boundary: fused.boundary,
    })
}

/// Self-attention over `[CLS; audio; text]`; the CLS row is the fused
/// representation.
#[derive(Clone, Debug)]
pub struct FusionTransformer {
    pub cls: ParamId,
    pub audio_type: ParamId,
    pub text_type: ParamId,
    pub blocks: Vec<TransformerBlock>,
    pub width: usize,
}

pub struct FusionOutput {
    /// `[d]`.
    pub cls: Var,
    pub boundary: usize,
    pub weights: Vec<Var>,
}

impl FusionTransformer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        cfg: &FusionConfig,
        rng: &mut R,
    ) -> Result<Self, FusionError> {
        cfg.validate(width)?;
        let cls = store.add(format!("{name}.cls"), RealArray::randn(&[width], 1.0, rng));
        let audio_type = store.add(format!("{name}.type_audio"), RealArray::randn(&[width], 0.1, rng));
        let text_type = store.add(format!("{name}.type_text"), RealArray::randn(&[width], 0.1, rng));
        let blocks = (0..cfg.blocks)
            .map(|i| TransformerBlock::new(store, &format!("{name}.block{i}"), cfg.block_shape(width), rng))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            cls,
            audio_type,
            text_type,
            blocks,
            width,
        })
    }

    pub fn forward(&self, s: &mut Session, audio: Var, text: Var) -> Result<FusionOutput, FusionError> {
        let (cls, ta, tt) = (s.p(self.cls), s.p(self.audio_type), s.p(self.text_type));
        let fused = concat_with_cls_graph(s.graph, audio, text, cls, ta, tt)?;
        let mut h = fused.values;
        let mut weights = Vec::new();
        for block in &self.blocks {
            let out = block.forward(s, h)?;
            h = out.output;
            weights.extend(out.weights);
        }
        let row = s.graph.slice_rows(h, 0, 1)?;
        let cls = s.graph.reshape(row, vec![self.width])?;
        Ok(FusionOutput {
            cls,
            boundary: fused.boundary,
            weights,
        })
    }

    /// Evaluation-mode forward over feature matrices.
    pub fn fuse(&self, store: &ParamStore, audio: &FeatureSequence, text: &FeatureSequence) -> Result<RealArray, FusionError> {
        let mut g = Graph::new();
        let mut s = Session::eval(&mut g, store);
        let a = s.graph.constant(audio.values.clone());
        let t = s.graph.constant(text.values.clone());
        let out = self.forward(&mut s, a, t)?;
        Ok(g.value(out.cls).clone())
    }
}

/// Evaluation-mode cross-attention: output length equals the query length.
pub fn cross_attention(
    store: &ParamStore,
    layer: &CrossAttention,
    queries: &FeatureSequence,
    keys_values: &FeatureSequence,
) -> Result<FeatureSequence, FusionError> {
    let mut g = Graph::new();
    let mut s = Session::eval(&mut g, store);
    let q = s.graph.constant(queries.values.clone());
    let kv = s.graph.constant(keys_values.values.clone());
    let out = layer.forward(&mut s, q, kv)?;
    Ok(FeatureSequence {
        values: g.value(out.output).clone(),
        modality: Modality::Fused,
    })
}

/// Learned `p×d` reference set.
#[derive(Clone, Debug)]
pub struct ReferenceSet {
    pub references: ParamId,
    pub count: usize,
    pub width: usize,
}

impl ReferenceSet {
    /// Unit-variance entries scaled by `1/√d`.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, count: usize, width: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (width as f64).sqrt();
        Self {
            references: store.add(format!("{name}.references"), RealArray::randn(&[count, width], scale, rng)),
            count,
            width,
        }
    }
}

/// Graph form of [`otk_pool`]. Returns the flattened `[p·d]` embedding.
pub fn otk_pool_graph(
    g: &mut Graph,
    features: Var,
    references: Var,
    cfg: &SinkhornConfig,
) -> Result<(Var, SinkhornTrace), FusionError> {
    let (_, d) = g.value(features).dims2();
    let (p, dz) = g.value(references).dims2();
    if d != dz {
        return Err(NumError::Dimension {
            op: "otk_pool",
            lhs: g.shape(features).to_vec(),
            rhs: g.shape(references).to_vec(),
        }
        .into());
    }
    let zt = g.transpose(references);
    let sim = g.matmul(features, zt)?;
    let cost = g.scale(sim, -1.0 / (d as f64).sqrt())?;
    let (plan, trace) = sinkhorn_graph(g, cost, cfg)?;
    let pt = g.transpose(plan);
    let pooled = g.matmul(pt, features)?;
    let pooled = g.scale(pooled, p as f64)?;
    Ok((g.reshape(pooled, vec![p * d])?, trace))
}

/// Transport-weighted pooling of `features` onto `references`: row `j` of the
/// `p×d` result is `p · Σ_i plan[i,j] · feature_i`, flattened row-major.
pub fn otk_pool(features: &FeatureSequence, references: &RealArray, cfg: &SinkhornConfig) -> Result<RealArray, FusionError> {
    let mut g = Graph::new();
    let x = g.constant(features.values.clone());
    let z = g.constant(references.clone());
    let (out, _) = otk_pool_graph(&mut g, x, z, cfg)?;
    Ok(g.value(out).clone())
}

/// Cross-attention in both directions, each branch OTK-pooled, concatenated
/// with the self-attention-pooled latent of each modality:
/// `[otk(audio←text); otk(text←audio); audio_pooled; text_pooled]`.
#[derive(Clone, Debug)]
pub struct OtkFusion {
    pub audio_queries_text: CrossAttention,
    pub text_queries_audio: CrossAttention,
    pub audio_refs: ReferenceSet,
    pub text_refs: ReferenceSet,
    pub sinkhorn: SinkhornConfig,
    pub width: usize,
}

pub struct OtkOutput {
    pub embedding: Var,
    pub traces: [SinkhornTrace; 2],
    pub weights: Vec<Var>,
}

impl OtkFusion {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        cfg: &FusionConfig,
        rng: &mut R,
    ) -> Result<Self, FusionError> {
        cfg.validate(width)?;
        let eps = cfg.layer_norm_eps;
        Ok(Self {
            audio_queries_text: CrossAttention::new(store, &format!("{name}.a2t"), width, cfg.heads, eps, rng)?,
            text_queries_audio: CrossAttention::new(store, &format!("{name}.t2a"), width, cfg.heads, eps, rng)?,
            audio_refs: ReferenceSet::new(store, &format!("{name}.audio"), cfg.references, width, rng),
            text_refs: ReferenceSet::new(store, &format!("{name}.text"), cfg.references, width, rng),
            sinkhorn: cfg.sinkhorn,
            width,
        })
    }

    pub fn embedding_width(&self) -> usize {
        (self.audio_refs.count + self.text_refs.count + 2) * self.width
    }

    pub fn forward(
        &self,
        s: &mut Session,
        audio: Var,
        text: Var,
        audio_pooled: Var,
        text_pooled: Var,
    ) -> Result<OtkOutput, FusionError> {
        let a = self.audio_queries_text.forward(s, audio, text)?;
        let t = self.text_queries_audio.forward(s, text, audio)?;
        let za = s.p(self.audio_refs.references);
        let zt = s.p(self.text_refs.references);
        let (pa, ta) = otk_pool_graph(s.graph, a.output, za, &self.sinkhorn)?;
        let (pt, tt) = otk_pool_graph(s.graph, t.output, zt, &self.sinkhorn)?;
        let embedding = s.graph.concat_cols(&[pa, pt, audio_pooled, text_pooled])?;
        let mut weights = a.weights;
        weights.extend(t.weights);
        Ok(OtkOutput {
            embedding,
            traces: [ta, tt],
            weights,
        })
    }
}
