use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Gradients, Graph, NumError, RealArray, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: RealArray,
}

/// Named trainable tensors, addressed by [`ParamId`] in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: RealArray) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &RealArray {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut RealArray {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn values(&self) -> Vec<RealArray> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Replaces every value; shapes must match the existing entries.
    pub fn set_values(&mut self, values: Vec<RealArray>) -> Result<(), NumError> {
        if values.len() != self.params.len() {
            return Err(NumError::Contract(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if p.value.shape() != v.shape() {
                return Err(NumError::Dimension {
                    op: "ParamStore::set_values",
                    lhs: p.value.shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            p.value = v;
        }
        Ok(())
    }
}

/// One forward pass: a graph plus lazily bound parameter leaves.
pub struct Session<'a> {
    pub graph: &'a mut Graph,
    store: &'a ParamStore,
    bound: Vec<Option<Var>>,
    dropout_rng: Option<ChaCha8Rng>,
}

impl<'a> Session<'a> {
    /// Evaluation mode: dropout disabled.
    pub fn eval(graph: &'a mut Graph, store: &'a ParamStore) -> Self {
        Self {
            graph,
            store,
            bound: vec![None; store.len()],
            dropout_rng: None,
        }
    }

    /// Training mode with a dropout stream derived from `seed`.
    pub fn train(graph: &'a mut Graph, store: &'a ParamStore, seed: u64) -> Self {
        Self {
            dropout_rng: Some(ChaCha8Rng::seed_from_u64(seed)),
            ..Self::eval(graph, store)
        }
    }

    /// Evaluation mode where parameter `i` is the pre-existing leaf `vars[i]`.
    pub fn with_bindings(graph: &'a mut Graph, store: &'a ParamStore, vars: &[Var]) -> Self {
        let mut s = Self::eval(graph, store);
        for (slot, v) in s.bound.iter_mut().zip(vars) {
            *slot = Some(*v);
        }
        s
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    /// Leaf for parameter `id`, created on first use.
    pub fn p(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.graph.param(self.store.get(id).clone());
        self.bound[id.0] = Some(v);
        v
    }

    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var, NumError> {
        match self.dropout_rng.as_mut() {
            Some(rng) if rate > 0.0 => self.graph.dropout(x, rate, rng),
            _ => Ok(x),
        }
    }

    /// Per-parameter gradients in store order; unbound parameters get `None`.
    pub fn param_grads<'g>(&self, grads: &'g Gradients) -> Vec<Option<&'g [f64]>> {
        self.bound.iter().map(|b| b.and_then(|v| grads.raw(v))).collect()
    }
}
