//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node holding its value, so node order is a
//! topological order and the reverse pass is a single backward sweep.

use rand::Rng;
use libm::erf;

use super::array::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use super::{NumError, RealArray};

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Which GELU formula the graph evaluates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeluMode {
    /// `x·Φ(x)` with the exact normal CDF.
    #[default]
    Exact,
    /// `0.5·x·(1 + tanh(√(2/π)(x + 0.044715x³)))`.
    Tanh,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Gelu(Var, GeluMode),
    Exp(Var),
    SoftmaxRows(Var),
    LogSumExpRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        label: usize,
        probs: Vec<f64>,
    },
    Sum(Var),
    MeanRows(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    Frames {
        x: Var,
        kernel: usize,
        stride: usize,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    MulConst(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: RealArray,
    op: Op,
    requires_grad: bool,
}

/// A computation record: values plus the operations that produced them.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of `var`, or `None` when it does not depend on the loss
    /// through a differentiable path.
    pub fn get(&self, var: Var) -> Option<RealArray> {
        self.grads[var.0]
            .as_ref()
            .map(|g| RealArray::from_parts(self.shapes[var.0].clone(), g.clone()))
    }

    /// Gradient of `var` as a flat slice, zeros if untouched.
    pub fn get_or_zeros(&self, var: Var) -> RealArray {
        self.get(var)
            .unwrap_or_else(|| RealArray::zeros(&self.shapes[var.0]))
    }

    pub fn raw(&self, var: Var) -> Option<&[f64]> {
        self.grads[var.0].as_deref()
    }
}

fn dims(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        other => (other[0], other[1..].iter().product()),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: RealArray) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: RealArray) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, var: Var) -> &RealArray {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: RealArray, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(
        &mut self,
        op_name: &'static str,
        value: RealArray,
        op: Op,
        requires_grad: bool,
    ) -> Result<Var, NumError> {
        if !value.is_finite() {
            return Err(NumError::NonFinite { op: op_name });
        }
        Ok(self.push(value, op, requires_grad))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn dims(&self, var: Var) -> (usize, usize) {
        dims(self.shape(var))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(NumError::Dimension {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(&[a, b]);
        self.push_checked(
            "matmul",
            RealArray::from_parts(vec![m, n], out),
            Op::MatMul(a, b),
            rg,
        )
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(value, Op::Transpose(a), rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumError> {
        if self.value(a).len() != self.value(b).len() || self.dims(a) != self.dims(b) {
            return Err(NumError::Dimension {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, NumError> {
        self.same_shape(name, a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        self.push_checked(name, RealArray::from_parts(shape, data), op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.zip_with("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.zip_with("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.zip_with("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// `m[r×c] + v[c]` broadcast over rows.
    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var, NumError> {
        let (r, c) = self.dims(m);
        if self.value(v).len() != c {
            return Err(NumError::Dimension {
                op: "add_row",
                lhs: self.shape(m).to_vec(),
                rhs: self.shape(v).to_vec(),
            });
        }
        let vv = self.value(v).data();
        let mut data = self.value(m).data().to_vec();
        for i in 0..r {
            for (o, &b) in data[i * c..(i + 1) * c].iter_mut().zip(vv) {
                *o += b;
            }
        }
        let shape = self.shape(m).to_vec();
        let rg = self.rg(&[m, v]);
        self.push_checked("add_row", RealArray::from_parts(shape, data), Op::AddRow(m, v), rg)
    }

    /// `m[r×c] + v[r]` broadcast over columns.
    pub fn add_col(&mut self, m: Var, v: Var) -> Result<Var, NumError> {
        let (r, c) = self.dims(m);
        if self.value(v).len() != r {
            return Err(NumError::Dimension {
                op: "add_col",
                lhs: self.shape(m).to_vec(),
                rhs: self.shape(v).to_vec(),
            });
        }
        let vv = self.value(v).data();
        let mut data = self.value(m).data().to_vec();
        for i in 0..r {
            for o in &mut data[i * c..(i + 1) * c] {
                *o += vv[i];
            }
        }
        let shape = self.shape(m).to_vec();
        let rg = self.rg(&[m, v]);
        self.push_checked("add_col", RealArray::from_parts(shape, data), Op::AddCol(m, v), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, NumError> {
        let v = self.value(a);
        let data = v.data().iter().map(|x| x * factor).collect();
        let shape = v.shape().to_vec();
        let rg = self.rg(&[a]);
        self.push_checked("scale", RealArray::from_parts(shape, data), Op::Scale(a, factor), rg)
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Result<Var, NumError> {
        let v = self.value(a);
        let data = v.data().iter().map(|x| x + offset).collect();
        let shape = v.shape().to_vec();
        let rg = self.rg(&[a]);
        self.push_checked("add_scalar", RealArray::from_parts(shape, data), Op::AddScalar(a), rg)
    }

    /// Elementwise multiplication by a fixed mask, e.g. for dropout.
    pub fn mul_const(&mut self, a: Var, mask: Vec<f64>) -> Result<Var, NumError> {
        if mask.len() != self.value(a).len() {
            return Err(NumError::Dimension {
                op: "mul_const",
                lhs: self.shape(a).to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let v = self.value(a);
        let data = v.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let shape = v.shape().to_vec();
        let rg = self.rg(&[a]);
        self.push_checked("mul_const", RealArray::from_parts(shape, data), Op::MulConst(a, mask), rg)
    }

    /// Inverted dropout; identity when `rate` is zero.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var, NumError> {
        if rate <= 0.0 {
            return Ok(a);
        }
        let keep = 1.0 - rate;
        let mask = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        self.mul_const(a, mask)
    }

    pub fn gelu(&mut self, a: Var, mode: GeluMode) -> Result<Var, NumError> {
        let v = self.value(a);
        let data = v.data().iter().map(|&x| gelu_value(x, mode)).collect();
        let shape = v.shape().to_vec();
        let rg = self.rg(&[a]);
        self.push_checked("gelu", RealArray::from_parts(shape, data), Op::Gelu(a, mode), rg)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NumError> {
        let v = self.value(a);
        let data = v.data().iter().map(|x| x.exp()).collect();
        let shape = v.shape().to_vec();
        let rg = self.rg(&[a]);
        self.push_checked("exp", RealArray::from_parts(shape, data), Op::Exp(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, NumError> {
        let (r, c) = self.dims(a);
        let mut data = self.value(a).data().to_vec();
        for i in 0..r {
            softmax_in_place(&mut data[i * c..(i + 1) * c]);
        }
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a]);
        self.push_checked("softmax_rows", RealArray::from_parts(shape, data), Op::SoftmaxRows(a), rg)
    }

    /// Row-wise log-sum-exp, `[r×c] -> [r]`.
    pub fn logsumexp_rows(&mut self, a: Var) -> Result<Var, NumError> {
        let (r, c) = self.dims(a);
        let src = self.value(a).data();
        let data = (0..r).map(|i| logsumexp(&src[i * c..(i + 1) * c])).collect();
        let rg = self.rg(&[a]);
        self.push_checked(
            "logsumexp_rows",
            RealArray::from_parts(vec![r], data),
            Op::LogSumExpRows(a),
            rg,
        )
    }

    /// Per-row standardization followed by `gain ⊙ x̂ + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, NumError> {
        if eps <= 0.0 {
            return Err(NumError::Contract(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let (r, c) = self.dims(x);
        if self.value(gain).len() != c || self.value(bias).len() != c {
            return Err(NumError::Dimension {
                op: "layer_norm",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(gain).to_vec(),
            });
        }
        let src = self.value(x).data();
        let gv = self.value(gain).data();
        let bv = self.value(bias).data();
        let mut xhat = vec![0.0; r * c];
        let mut rstd = vec![0.0; r];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &src[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let s = 1.0 / (var + eps).sqrt();
            rstd[i] = s;
            for j in 0..c {
                let h = (row[j] - mean) * s;
                xhat[i * c + j] = h;
                out[i * c + j] = gv[j] * h + bv[j];
            }
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(&[x, gain, bias]);
        self.push_checked(
            "layer_norm",
            RealArray::from_parts(shape, out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        )
    }

    /// `−log softmax(logits)[label]` as a scalar node.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var, NumError> {
        let z = self.value(logits).data();
        if label >= z.len() {
            return Err(NumError::Index {
                op: "cross_entropy",
                index: label,
                bound: z.len(),
            });
        }
        let lse = logsumexp(z);
        let loss = lse - z[label];
        let probs = z.iter().map(|v| (v - lse).exp()).collect();
        let rg = self.rg(&[logits]);
        self.push_checked(
            "cross_entropy",
            RealArray::scalar(loss),
            Op::CrossEntropy {
                logits,
                label,
                probs,
            },
            rg,
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(RealArray::scalar(s), Op::Sum(a), rg)
    }

    /// Column means, `[r×c] -> [c]`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.dims(a);
        let src = self.value(a).data();
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, v) in out.iter_mut().zip(&src[i * c..(i + 1) * c]) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        let rg = self.rg(&[a]);
        self.push(RealArray::from_parts(vec![c], out), Op::MeanRows(a), rg)
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumError> {
        let (r, c) = self.dims(a);
        if start >= end || end > r {
            return Err(NumError::Index {
                op: "slice_rows",
                index: end,
                bound: r,
            });
        }
        let data = self.value(a).data()[start * c..end * c].to_vec();
        let rg = self.rg(&[a]);
        Ok(self.push(
            RealArray::from_parts(vec![end - start, c], data),
            Op::SliceRows(a, start),
            rg,
        ))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, NumError> {
        let (r, c) = self.dims(a);
        if start >= end || end > c {
            return Err(NumError::Index {
                op: "slice_cols",
                index: end,
                bound: c,
            });
        }
        let src = self.value(a).data();
        let w = end - start;
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&src[i * c + start..i * c + end]);
        }
        let rg = self.rg(&[a]);
        Ok(self.push(
            RealArray::from_parts(vec![r, w], data),
            Op::SliceCols(a, start),
            rg,
        ))
    }

    /// Vertical stack; rank-1 inputs count as single rows.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let first = *parts.first().ok_or(NumError::Empty { op: "concat_rows" })?;
        let c = self.dims(first).1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, pc) = self.dims(p);
            if pc != c {
                return Err(NumError::Dimension {
                    op: "concat_rows",
                    lhs: self.shape(first).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let rg = self.rg(parts);
        Ok(self.push(
            RealArray::from_parts(vec![rows, c], data),
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    /// Horizontal stack of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let first = *parts.first().ok_or(NumError::Empty { op: "concat_cols" })?;
        let r = self.dims(first).0;
        let mut total = 0;
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pr != r {
                return Err(NumError::Dimension {
                    op: "concat_cols",
                    lhs: self.shape(first).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            total += pc;
        }
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let pc = self.dims(p).1;
                data.extend_from_slice(&self.value(p).data()[i * pc..(i + 1) * pc]);
            }
        }
        let shape = if r == 1 && parts.iter().all(|&p| self.shape(p).len() == 1) {
            vec![total]
        } else {
            vec![r, total]
        };
        let rg = self.rg(parts);
        Ok(self.push(
            RealArray::from_parts(shape, data),
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, NumError> {
        let value = self.value(a).reshaped(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Strided sliding windows over the rows of `x[L×C]`, one flattened window
    /// per output row: `[T × kernel·C]` with `T = (L − kernel)/stride + 1`.
    pub fn frames(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var, NumError> {
        let (len, c) = self.dims(x);
        let t = conv_output_len(len, kernel, stride).ok_or(NumError::Index {
            op: "frames",
            index: kernel,
            bound: len,
        })?;
        let src = self.value(x).data();
        let w = kernel * c;
        let mut data = Vec::with_capacity(t * w);
        for f in 0..t {
            let s = f * stride * c;
            data.extend_from_slice(&src[s..s + w]);
        }
        let rg = self.rg(&[x]);
        Ok(self.push(
            RealArray::from_parts(vec![t, w], data),
            Op::Frames { x, kernel, stride },
            rg,
        ))
    }

    /// Row lookup `table[ids]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumError> {
        let (r, c) = self.dims(table);
        if ids.is_empty() {
            return Err(NumError::Empty { op: "gather" });
        }
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= r {
                return Err(NumError::Index {
                    op: "gather",
                    index: id,
                    bound: r,
                });
            }
            data.extend_from_slice(&src[id * c..(id + 1) * c]);
        }
        let rg = self.rg(&[table]);
        Ok(self.push(
            RealArray::from_parts(vec![ids.len(), c], data),
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumError> {
        if self.value(loss).len() != 1 {
            return Err(NumError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &gout, &mut grads);
            grads[idx] = Some(gout);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, node: &Node, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        macro_rules! with_grad {
            ($v:expr, |$g:ident| $body:expr) => {
                if let Some($g) = grad_slot(nodes, grads, $v) {
                    $body
                }
            };
        }

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims(nodes[a.0].value.shape());
                let n = dims(nodes[b.0].value.shape()).1;
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                with_grad!(*a, |ga| gemm_nt_acc(gout, bv, ga, m, k, n));
                with_grad!(*b, |gb| gemm_tn_acc(av, gout, gb, m, k, n));
            }
            Op::Transpose(a) => {
                let (r, c) = dims(nodes[a.0].value.shape());
                with_grad!(*a, |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[i * c + j] += gout[j * r + i];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                with_grad!(*a, |ga| add_into(ga, gout));
                with_grad!(*b, |gb| add_into(gb, gout));
            }
            Op::Sub(a, b) => {
                with_grad!(*a, |ga| add_into(ga, gout));
                with_grad!(*b, |gb| {
                    for (g, o) in gb.iter_mut().zip(gout) {
                        *g -= o;
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = nodes[a.0].value.data();
                let bv = nodes[b.0].value.data();
                with_grad!(*a, |ga| {
                    for ((g, o), y) in ga.iter_mut().zip(gout).zip(bv) {
                        *g += o * y;
                    }
                });
                with_grad!(*b, |gb| {
                    for ((g, o), x) in gb.iter_mut().zip(gout).zip(av) {
                        *g += o * x;
                    }
                });
            }
            Op::AddRow(m, v) => {
                let c = nodes[v.0].value.len();
                with_grad!(*m, |gm| add_into(gm, gout));
                with_grad!(*v, |gv| {
                    for row in gout.chunks(c) {
                        add_into(gv, row);
                    }
                });
            }
            Op::AddCol(m, v) => {
                let c = dims(nodes[m.0].value.shape()).1;
                with_grad!(*m, |gm| add_into(gm, gout));
                with_grad!(*v, |gv| {
                    for (g, row) in gv.iter_mut().zip(gout.chunks(c)) {
                        *g += row.iter().sum::<f64>();
                    }
                });
            }
            Op::Scale(a, f) => {
                with_grad!(*a, |ga| {
                    for (g, o) in ga.iter_mut().zip(gout) {
                        *g += f * o;
                    }
                });
            }
            Op::AddScalar(a) | Op::Reshape(a) => {
                with_grad!(*a, |ga| add_into(ga, gout));
            }
            Op::MulConst(a, mask) => {
                with_grad!(*a, |ga| {
                    for ((g, o), m) in ga.iter_mut().zip(gout).zip(mask) {
                        *g += o * m;
                    }
                });
            }
            Op::Gelu(a, mode) => {
                let xs = nodes[a.0].value.data();
                with_grad!(*a, |ga| {
                    for ((g, o), &x) in ga.iter_mut().zip(gout).zip(xs) {
                        *g += o * gelu_derivative(x, *mode);
                    }
                });
            }
            Op::Exp(a) => {
                let ys = node.value.data();
                with_grad!(*a, |ga| {
                    for ((g, o), y) in ga.iter_mut().zip(gout).zip(ys) {
                        *g += o * y;
                    }
                });
            }
            Op::SoftmaxRows(a) => {
                let c = dims(node.value.shape()).1;
                let ys = node.value.data();
                with_grad!(*a, |ga| {
                    for ((grow, orow), yrow) in ga.chunks_mut(c).zip(gout.chunks(c)).zip(ys.chunks(c)) {
                        let dot: f64 = orow.iter().zip(yrow).map(|(o, y)| o * y).sum();
                        for ((g, o), y) in grow.iter_mut().zip(orow).zip(yrow) {
                            *g += y * (o - dot);
                        }
                    }
                });
            }
            Op::LogSumExpRows(a) => {
                let c = dims(nodes[a.0].value.shape()).1;
                let xs = nodes[a.0].value.data();
                let lse = node.value.data();
                with_grad!(*a, |ga| {
                    for (i, (grow, xrow)) in ga.chunks_mut(c).zip(xs.chunks(c)).enumerate() {
                        for (g, x) in grow.iter_mut().zip(xrow) {
                            *g += gout[i] * (x - lse[i]).exp();
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let c = nodes[gain.0].value.len();
                let gv = nodes[gain.0].value.data();
                with_grad!(*x, |gx| {
                    for (i, s) in rstd.iter().enumerate() {
                        let go = &gout[i * c..(i + 1) * c];
                        let h = &xhat[i * c..(i + 1) * c];
                        let mut mean_d = 0.0;
                        let mut mean_dh = 0.0;
                        for j in 0..c {
                            let d = go[j] * gv[j];
                            mean_d += d;
                            mean_dh += d * h[j];
                        }
                        mean_d /= c as f64;
                        mean_dh /= c as f64;
                        for j in 0..c {
                            let d = go[j] * gv[j];
                            gx[i * c + j] += s * (d - mean_d - h[j] * mean_dh);
                        }
                    }
                });
                with_grad!(*gain, |gg| {
                    for (orow, hrow) in gout.chunks(c).zip(xhat.chunks(c)) {
                        for ((g, o), h) in gg.iter_mut().zip(orow).zip(hrow) {
                            *g += o * h;
                        }
                    }
                });
                with_grad!(*bias, |gb| {
                    for orow in gout.chunks(c) {
                        add_into(gb, orow);
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                label,
                probs,
            } => {
                with_grad!(*logits, |gl| {
                    for (j, (g, p)) in gl.iter_mut().zip(probs).enumerate() {
                        let target = if j == *label { 1.0 } else { 0.0 };
                        *g += gout[0] * (p - target);
                    }
                });
            }
            Op::Sum(a) => {
                with_grad!(*a, |ga| {
                    for g in ga.iter_mut() {
                        *g += gout[0];
                    }
                });
            }
            Op::MeanRows(a) => {
                let (r, c) = dims(nodes[a.0].value.shape());
                with_grad!(*a, |ga| {
                    for grow in ga.chunks_mut(c) {
                        for (g, o) in grow.iter_mut().zip(gout) {
                            *g += o / r as f64;
                        }
                    }
                });
            }
            Op::SliceRows(a, start) => {
                let c = dims(nodes[a.0].value.shape()).1;
                with_grad!(*a, |ga| add_into(&mut ga[start * c..start * c + gout.len()], gout));
            }
            Op::SliceCols(a, start) => {
                let c = dims(nodes[a.0].value.shape()).1;
                let w = dims(node.value.shape()).1;
                with_grad!(*a, |ga| {
                    for (i, orow) in gout.chunks(w).enumerate() {
                        add_into(&mut ga[i * c + start..i * c + start + w], orow);
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = nodes[p.0].value.len();
                    with_grad!(*p, |gp| add_into(gp, &gout[offset..offset + len]));
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = dims(node.value.shape()).1;
                let mut col = 0;
                for p in parts {
                    let (r, pc) = dims(nodes[p.0].value.shape());
                    with_grad!(*p, |gp| {
                        for i in 0..r {
                            add_into(
                                &mut gp[i * pc..(i + 1) * pc],
                                &gout[i * total + col..i * total + col + pc],
                            );
                        }
                    });
                    col += pc;
                }
            }
            Op::Frames { x, kernel, stride } => {
                let c = dims(nodes[x.0].value.shape()).1;
                let w = kernel * c;
                with_grad!(*x, |gx| {
                    for (f, orow) in gout.chunks(w).enumerate() {
                        let s = f * stride * c;
                        add_into(&mut gx[s..s + w], orow);
                    }
                });
            }
            Op::Gather { table, ids } => {
                let c = dims(nodes[table.0].value.shape()).1;
                with_grad!(*table, |gt| {
                    for (orow, &id) in gout.chunks(c).zip(ids) {
                        add_into(&mut gt[id * c..(id + 1) * c], orow);
                    }
                });
            }
        }
    }
}

/// Accumulation buffer for `v`, created on first touch; `None` for nodes
/// outside the differentiable subgraph.
fn grad_slot<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Frame count of one strided valid convolution, `None` if the input is
/// shorter than the kernel.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    if kernel == 0 || stride == 0 || len < kernel {
        None
    } else {
        Some((len - kernel) / stride + 1)
    }
}

pub fn gelu_value(x: f64, mode: GeluMode) -> f64 {
    match mode {
        GeluMode::Exact => 0.5 * x * (1.0 + erf(x * INV_SQRT_2)),
        GeluMode::Tanh => {
            let u = SQRT_2_OVER_PI * (x + 0.044715 * x * x * x);
            0.5 * x * (1.0 + u.tanh())
        }
    }
}

fn gelu_derivative(x: f64, mode: GeluMode) -> f64 {
    match mode {
        GeluMode::Exact => {
            let cdf = 0.5 * (1.0 + erf(x * INV_SQRT_2));
            let pdf = INV_SQRT_2PI * (-0.5 * x * x).exp();
            cdf + x * pdf
        }
        GeluMode::Tanh => {
            let u = SQRT_2_OVER_PI * (x + 0.044715 * x * x * x);
            let t = u.tanh();
            let du = SQRT_2_OVER_PI * (1.0 + 3.0 * 0.044715 * x * x);
            0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
        }
    }
}

pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
