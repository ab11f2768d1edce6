use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::numcore::{logsumexp, Graph, NumError, RealArray, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(FusionError::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.tol > 0.0) {
            return Err(FusionError::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(FusionError::Config("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Entropic plan between uniform marginals `1/n` (rows) and `1/p` (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub plan: RealArray,
    pub epsilon: f64,
    /// Largest row-sum deviation from `1/n` after the final sweep. Column
    /// sums are exact up to rounding because every sweep ends on them.
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Residual after each sweep.
    pub residual_history: Vec<f64>,
}

impl TransportPlan {
    /// `⟨cost, plan⟩`.
    pub fn transport_cost(&self, cost: &RealArray) -> f64 {
        self.plan.data().iter().zip(cost.data()).map(|(p, c)| p * c).sum()
    }
}

/// Log-domain Sinkhorn state: `P_ij = exp(M_ij + f_i + g_j)`, `M = −C/ε`.
struct LogState {
    n: usize,
    p: usize,
    m: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl LogState {
    fn new(cost: &RealArray, epsilon: f64) -> Result<Self, FusionError> {
        let (n, p) = cost.dims2();
        let m: Vec<f64> = cost.data().iter().map(|c| -c / epsilon).collect();
        if m.iter().any(|v| !v.is_finite()) {
            return Err(FusionError::Numerical { epsilon, iteration: 0 });
        }
        Ok(Self {
            n,
            p,
            m,
            f: vec![0.0; n],
            g: vec![0.0; p],
        })
    }

    fn sweep(&mut self, scratch: &mut Vec<f64>) {
        let (n, p) = (self.n, self.p);
        let (ln_n, ln_p) = ((n as f64).ln(), (p as f64).ln());
        for i in 0..n {
            scratch.clear();
            scratch.extend((0..p).map(|j| self.m[i * p + j] + self.g[j]));
            self.f[i] = -ln_n - logsumexp(scratch);
        }
        for j in 0..p {
            scratch.clear();
            scratch.extend((0..n).map(|i| self.m[i * p + j] + self.f[i]));
            self.g[j] = -ln_p - logsumexp(scratch);
        }
    }

    fn finite(&self) -> bool {
        self.f.iter().chain(&self.g).all(|v| v.is_finite())
    }

    fn plan(&self) -> Vec<f64> {
        let p = self.p;
        (0..self.n * p)
            .map(|k| (self.m[k] + self.f[k / p] + self.g[k % p]).exp())
            .collect()
    }
}

fn row_residual(plan: &[f64], n: usize, p: usize) -> f64 {
    let target = 1.0 / n as f64;
    (0..n)
        .map(|i| (plan[i * p..(i + 1) * p].iter().sum::<f64>() - target).abs())
        .fold(0.0, f64::max)
}

fn check_cost(cost: &RealArray) -> Result<(), FusionError> {
    if cost.shape().len() != 2 {
        return Err(NumError::Dimension {
            op: "sinkhorn",
            lhs: vec![0, 0],
            rhs: cost.shape().to_vec(),
        }
        .into());
    }
    if !cost.is_finite() {
        return Err(NumError::NonFinite { op: "sinkhorn" }.into());
    }
    Ok(())
}

/// Alternating row/column scaling of `exp(−cost/ε)` until the row residual
/// drops below `tol` or `max_iter` sweeps have run.
pub fn sinkhorn(cost: &RealArray, cfg: &SinkhornConfig) -> Result<TransportPlan, FusionError> {
    cfg.validate()?;
    check_cost(cost)?;
    let mut state = LogState::new(cost, cfg.epsilon)?;
    let (n, p) = (state.n, state.p);
    let mut scratch = Vec::with_capacity(n.max(p));
    let mut history = Vec::new();
    let mut plan = Vec::new();
    let mut converged = false;
    for iteration in 1..=cfg.max_iter {
        state.sweep(&mut scratch);
        if !state.finite() {
            return Err(FusionError::Numerical {
                epsilon: cfg.epsilon,
                iteration,
            });
        }
        plan = state.plan();
        let r = row_residual(&plan, n, p);
        history.push(r);
        if r < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(TransportPlan {
        plan: RealArray::from_parts(vec![n, p], plan),
        epsilon: cfg.epsilon,
        residual: *history.last().expect("max_iter >= 1"),
        converged,
        iterations: history.len(),
        residual_history: history,
    })
}

/// Convergence record of a graph-level Sinkhorn run.
#[derive(Clone, Debug, PartialEq)]
pub struct SinkhornTrace {
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Sinkhorn on the tape; the returned plan is differentiable with respect to
/// `cost` through every executed sweep.
pub fn sinkhorn_graph(g: &mut Graph, cost: Var, cfg: &SinkhornConfig) -> Result<(Var, SinkhornTrace), FusionError> {
    cfg.validate()?;
    check_cost(g.value(cost))?;
    let (n, p) = g.value(cost).dims2();
    let (ln_n, ln_p) = ((n as f64).ln(), (p as f64).ln());
    let m = g.scale(cost, -1.0 / cfg.epsilon)?;
    if !g.value(m).is_finite() {
        return Err(FusionError::Numerical {
            epsilon: cfg.epsilon,
            iteration: 0,
        });
    }
    let mut gv = g.constant(RealArray::zeros(&[p]));
    let mut fv;
    let mut plan = Vec::new();
    let mut trace = SinkhornTrace {
        residual: f64::INFINITY,
        converged: false,
        iterations: 0,
    };
    let numerical = |iteration| FusionError::Numerical {
        epsilon: cfg.epsilon,
        iteration,
    };
    loop {
        let iteration = trace.iterations + 1;
        let shifted = g.add_row(m, gv)?;
        let lse = g.logsumexp_rows(shifted).map_err(|_| numerical(iteration))?;
        let neg = g.scale(lse, -1.0)?;
        fv = g.add_scalar(neg, -ln_n)?;

        let shifted = g.add_col(m, fv)?;
        let shifted = g.transpose(shifted);
        let lse = g.logsumexp_rows(shifted).map_err(|_| numerical(iteration))?;
        let neg = g.scale(lse, -1.0)?;
        gv = g.add_scalar(neg, -ln_p)?;

        let (md, fd, gd) = (g.value(m).data(), g.value(fv).data(), g.value(gv).data());
        plan.clear();
        plan.extend((0..n * p).map(|k| (md[k] + fd[k / p] + gd[k % p]).exp()));
        trace.iterations = iteration;
        trace.residual = row_residual(&plan, n, p);
        if trace.residual < cfg.tol {
            trace.converged = true;
            break;
        }
        if iteration == cfg.max_iter {
            break;
        }
    }
    let log_plan = g.add_row(m, gv)?;
    let log_plan = g.add_col(log_plan, fv)?;
    let plan = g.exp(log_plan)?;
    Ok((plan, trace))
}

/// Exact optimal transport for square costs with uniform marginals.
///
/// The optimum is attained at a permutation matrix scaled by `1/n`, so all
/// `n!` permutations are enumerated in lexicographic order and the first
/// minimizer is kept.
pub fn exact_ot_oracle(cost: &RealArray) -> Result<ExactTransport, FusionError> {
    check_cost(cost)?;
    let (n, p) = cost.dims2();
    if n != p {
        return Err(NumError::Dimension {
            op: "exact_ot_oracle",
            lhs: vec![n, n],
            rhs: vec![n, p],
        }
        .into());
    }
    if n > MAX_ORACLE_SIZE {
        return Err(FusionError::TooLarge { n, max: MAX_ORACLE_SIZE });
    }
    let value = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum::<f64>() / n as f64;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = value(&perm);
    while next_permutation(&mut perm) {
        let c = value(&perm);
        if c < best_cost {
            best_cost = c;
            best.clone_from(&perm);
        }
    }
    let mut plan = RealArray::zeros(&[n, n]);
    for (i, &j) in best.iter().enumerate() {
        plan.data_mut()[i * n + j] = 1.0 / n as f64;
    }
    Ok(ExactTransport {
        plan,
        cost: best_cost,
        permutation: best,
    })
}

pub const MAX_ORACLE_SIZE: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct ExactTransport {
    pub plan: RealArray,
    pub cost: f64,
    /// Row `i` is matched to column `permutation[i]`.
    pub permutation: Vec<usize>,
}

fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).expect("pivot has a successor");
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::next_permutation;

    #[test]
    fn permutations_are_lexicographic() {
        let mut v = vec![0, 1, 2];
        let mut all = vec![v.clone()];
        while next_permutation(&mut v) {
            all.push(v.clone());
        }
        assert_eq!(
            all,
            vec![vec![0, 1, 2], vec![0, 2, 1], vec![1, 0, 2], vec![1, 2, 0], vec![2, 0, 1], vec![2, 1, 0]]
        );
    }
}
