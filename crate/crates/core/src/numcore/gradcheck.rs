use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, NumError, RealArray, Var};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Check at most this many coordinates per input; `None` checks all.
    pub max_coords_per_input: Option<usize>,
    /// Seed for choosing the sampled coordinates.
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            max_coords_per_input: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input, element)` where the worst error occurred.
    pub worst: Option<(usize, usize)>,
    pub coords_checked: usize,
}

/// Compares the tape gradient of a scalar function against central
/// differences `(f(x+h) − f(x−h)) / 2h`.
///
/// `f` receives a fresh graph holding the inputs as parameter leaves and must
/// return a scalar node. Relative error uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(f: F, inputs: &[RealArray], opts: &GradCheckOptions) -> Result<GradCheckReport, NumError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, NumError>,
{
    if opts.step <= 0.0 {
        return Err(NumError::Contract(format!("grad_check step must be > 0, got {}", opts.step)));
    }
    let eval = |values: &[RealArray]| -> Result<(Graph, Vec<Var>, Var), NumError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|v| g.param(v.clone())).collect();
        let out = f(&mut g, &vars)?;
        if g.value(out).len() != 1 {
            return Err(NumError::Contract("grad_check function must return a scalar".into()));
        }
        Ok((g, vars, out))
    };

    let (g, vars, out) = eval(inputs)?;
    let grads = g.backward(out)?;
    drop(g);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coords_checked: 0,
    };
    let mut work: Vec<RealArray> = inputs.to_vec();
    for (input, var) in vars.iter().enumerate() {
        let analytic = grads.get_or_zeros(*var);
        let n = inputs[input].len();
        let coords: Vec<usize> = match opts.max_coords_per_input {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for element in coords {
            let original = inputs[input].data()[element];
            let f_at = |work: &mut Vec<RealArray>, x: f64| -> Result<f64, NumError> {
                work[input].data_mut()[element] = x;
                let value = eval(work)
                    .map(|(g, _, out)| g.value(out).item())
                    .map_err(|e| NumError::Evaluation {
                        input,
                        element,
                        reason: e.to_string(),
                    })?;
                if !value.is_finite() {
                    return Err(NumError::Evaluation {
                        input,
                        element,
                        reason: "non-finite function value".into(),
                    });
                }
                Ok(value)
            };
            let plus = f_at(&mut work, original + opts.step)?;
            let minus = f_at(&mut work, original - opts.step)?;
            work[input].data_mut()[element] = original;

            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic.data()[element];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.coords_checked += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                if rel >= report.max_rel_error {
                    report.worst = Some((input, element));
                }
            }
        }
    }
    Ok(report)
}
