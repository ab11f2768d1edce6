use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{evaluate, train, Example, LossWeights, Metrics, Model, ModelConfig, ModelError, ModelVariant, TrainConfig};
use crate::fusion::FusionScheme;

pub const DEFAULT_ALPHA_GRID: [f64; 5] = [0.1, 0.15, 0.2, 0.25, 0.3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub scheme: FusionScheme,
    pub alpha: f64,
    pub beta: f64,
    pub metrics: Metrics,
}

/// Cells in `schemes × grid` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub cells: Vec<AblationCell>,
}

impl AblationTable {
    /// Alpha with the highest macro-F1 for `scheme`; the first grid entry wins ties.
    pub fn best_alpha(&self, scheme: FusionScheme) -> Option<f64> {
        let mut best: Option<&AblationCell> = None;
        for cell in self.cells.iter().filter(|c| c.scheme == scheme) {
            if best.is_none_or(|b| cell.metrics.macro_f1 > b.metrics.macro_f1) {
                best = Some(cell);
            }
        }
        best.map(|c| c.alpha)
    }
}

/// Trains and evaluates one BeAts model per `(scheme, alpha)` cell with
/// `α = γ = alpha`, `β = 1 − 2α`. Every cell uses the same model and
/// training seeds. Up to `threads` cells run concurrently.
pub fn ablation_sweep(
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    train_set: &[Example],
    eval_set: &[Example],
    grid: &[f64],
    schemes: &[FusionScheme],
    threads: usize,
) -> Result<AblationTable, ModelError> {
    if grid.is_empty() || schemes.is_empty() {
        return Err(ModelError::Config("ablation grid and scheme list must be nonempty".into()));
    }
    let jobs: Vec<(FusionScheme, LossWeights)> = schemes
        .iter()
        .flat_map(|&s| grid.iter().map(move |&a| (s, a)))
        .map(|(s, a)| LossWeights::ablation(a).map(|w| (s, w)))
        .collect::<Result<_, _>>()?;
    for &(scheme, _) in &jobs {
        ModelConfig {
            variant: ModelVariant::beats(scheme),
            ..base.clone()
        }
        .validate()?;
    }
    let mut check = train_cfg.clone();
    check.weights = jobs[0].1;
    check.validate()?;

    let run = |(scheme, weights): (FusionScheme, LossWeights)| -> Result<AblationCell, ModelError> {
        let mut model = Model::new(ModelConfig {
            variant: ModelVariant::beats(scheme),
            ..base.clone()
        })?;
        let cfg = TrainConfig {
            weights,
            ..train_cfg.clone()
        };
        train(&mut model, train_set, &cfg)?;
        let eval = evaluate(&model, eval_set)?;
        Ok(AblationCell {
            scheme,
            alpha: weights.alpha,
            beta: weights.beta,
            metrics: eval.metrics,
        })
    };

    let results: Mutex<Vec<Option<Result<AblationCell, ModelError>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&job) = jobs.get(i) else { break };
                let r = run(job);
                results.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    let cells = results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<_, _>>()?;
    Ok(AblationTable { cells })
}
