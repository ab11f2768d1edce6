//! The invariant suite run by `beats verify` and the acceptance tests.
//!
//! Each check returns a one-line summary on success and a message naming
//! the failing seed otherwise.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::oracle::{audio_oracle, bimodal_oracle, text_oracle};
use crate::data::{decode_wav, encode_wav, generate_records, synth_utterance, GeneratorConfig};
use crate::encoders::{AudioEncoder, EncoderConfig, Language, TextEncoder, TokenSequence, Waveform};
use crate::fusion::{exact_ot_oracle, otk_pool, otk_pool_graph, sinkhorn, sinkhorn_graph, FusionConfig, SinkhornConfig};
use crate::model::{joint_loss, Example, LossWeights, Model, ModelConfig, ModelVariant, SpeechActLabel, DEFAULT_ALPHA_GRID};
use crate::numcore::{grad_check, GeluMode, GradCheckOptions, GradCheckReport, Graph, NumError, ParamStore, RealArray, Session, Var};
use crate::seed::derive;

/// Relative-error bound for the gradient checks.
pub const GRAD_TOL: f64 = 1e-4;
/// Looser bound for anything differentiated through unrolled Sinkhorn.
pub const GRAD_TOL_SINKHORN: f64 = 1e-3;
/// Marginal residual every converged plan must reach.
pub const SINKHORN_RESIDUAL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOptions {
    /// Seeds per randomized check.
    pub seeds: u64,
    /// Tolerance handed to Sinkhorn in the contract check.
    pub sinkhorn_tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seeds: 10,
            sinkhorn_tol: SinkhornConfig::default().tol,
        }
    }
}

pub type CheckFn = fn(&CheckOptions) -> Result<String, String>;

pub struct Check {
    pub name: &'static str,
    pub run: CheckFn,
}

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

/// Every check, each exactly once.
pub fn registry() -> Vec<Check> {
    vec![
        Check { name: "gradients.primitives", run: gradients_primitives },
        Check { name: "gradients.encoders", run: gradients_encoders },
        Check { name: "gradients.sinkhorn_otk", run: gradients_sinkhorn_otk },
        Check { name: "gradients.full_objective", run: gradients_full_objective },
        Check { name: "sinkhorn.contract", run: sinkhorn_contract },
        Check { name: "sinkhorn.exact_oracle", run: sinkhorn_exact_oracle },
        Check { name: "otk.permutation_invariance", run: otk_permutation_invariance },
        Check { name: "loss.joint_properties", run: joint_loss_properties },
        Check { name: "wav.round_trip", run: wav_round_trip },
        Check { name: "data.fidelity", run: data_fidelity },
        Check { name: "data.oracle_separability", run: oracle_separability },
    ]
}

pub fn run_check(check: &Check, opts: &CheckOptions) -> CheckOutcome {
    let start = Instant::now();
    let result = (check.run)(opts);
    let elapsed = start.elapsed();
    let (passed, detail) = match result {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    CheckOutcome {
        name: check.name,
        passed,
        detail,
        elapsed,
    }
}

fn contract<E: std::fmt::Display>(e: E) -> NumError {
    NumError::Contract(e.to_string())
}

fn weighted_sum(g: &mut Graph, v: Var, rng: &mut ChaCha8Rng) -> Result<Var, NumError> {
    let shape = g.shape(v).to_vec();
    let w = g.constant(RealArray::randn(&shape, 1.0, rng));
    let p = g.mul(v, w)?;
    Ok(g.sum(p))
}

type OpCase = (&'static str, Vec<Vec<usize>>, fn(&mut Graph, &[Var]) -> Result<Var, NumError>);

fn op_cases() -> Vec<OpCase> {
    vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], |g, v| g.matmul(v[0], v[1])),
        ("transpose", vec![vec![3, 2]], |g, v| Ok(g.transpose(v[0]))),
        ("add", vec![vec![2, 3], vec![2, 3]], |g, v| g.add(v[0], v[1])),
        ("sub", vec![vec![2, 3], vec![2, 3]], |g, v| g.sub(v[0], v[1])),
        ("mul", vec![vec![2, 3], vec![2, 3]], |g, v| g.mul(v[0], v[1])),
        ("add_row", vec![vec![3, 2], vec![2]], |g, v| g.add_row(v[0], v[1])),
        ("add_col", vec![vec![3, 2], vec![3]], |g, v| g.add_col(v[0], v[1])),
        ("scale", vec![vec![2, 2]], |g, v| g.scale(v[0], -1.7)),
        ("add_scalar", vec![vec![2, 2]], |g, v| g.add_scalar(v[0], 0.3)),
        ("gelu", vec![vec![2, 4]], |g, v| g.gelu(v[0], GeluMode::Exact)),
        ("gelu_tanh", vec![vec![2, 4]], |g, v| g.gelu(v[0], GeluMode::Tanh)),
        ("exp", vec![vec![2, 3]], |g, v| g.exp(v[0])),
        ("softmax_rows", vec![vec![3, 4]], |g, v| g.softmax_rows(v[0])),
        ("logsumexp_rows", vec![vec![3, 4]], |g, v| g.logsumexp_rows(v[0])),
        ("layer_norm", vec![vec![3, 5], vec![5], vec![5]], |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5)),
        ("cross_entropy", vec![vec![3]], |g, v| g.cross_entropy(v[0], 2)),
        ("mean_rows", vec![vec![4, 3]], |g, v| Ok(g.mean_rows(v[0]))),
        ("slice_rows", vec![vec![4, 3]], |g, v| g.slice_rows(v[0], 1, 3)),
        ("slice_cols", vec![vec![3, 5]], |g, v| g.slice_cols(v[0], 2, 4)),
        ("concat_rows", vec![vec![2, 3], vec![3]], |g, v| g.concat_rows(&[v[0], v[1]])),
        ("concat_cols", vec![vec![2, 3], vec![2, 1]], |g, v| g.concat_cols(&[v[0], v[1]])),
        ("reshape", vec![vec![2, 3]], |g, v| g.reshape(v[0], vec![6])),
        ("frames", vec![vec![11, 2]], |g, v| g.frames(v[0], 3, 2)),
        ("gather", vec![vec![5, 3]], |g, v| g.gather(v[0], &[4, 0, 4, 2])),
        ("mul_const", vec![vec![2, 2]], |g, v| g.mul_const(v[0], vec![0.0, 2.0, 1.0, -1.0])),
    ]
}

/// Every differentiable tape operation, reduced by a random weighted sum.
pub fn gradients_primitives(opts: &CheckOptions) -> Result<String, String> {
    let cases = op_cases();
    let mut worst = 0.0f64;
    for (name, shapes, op) in &cases {
        for seed in 0..opts.seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs: Vec<RealArray> = shapes.iter().map(|s| RealArray::randn(s, 1.0, &mut rng)).collect();
            let wseed = derive(seed, &[1]);
            let report = grad_check(
                |g, v| {
                    let out = op(g, v)?;
                    weighted_sum(g, out, &mut ChaCha8Rng::seed_from_u64(wseed))
                },
                &inputs,
                &GradCheckOptions::default(),
            )
            .map_err(|e| format!("{name} seed {seed}: {e}"))?;
            if !(report.max_rel_error < GRAD_TOL) {
                return Err(format!("{name} seed {seed}: relative error {:.3e}", report.max_rel_error));
            }
            worst = worst.max(report.max_rel_error);
        }
    }
    Ok(format!("{} ops x {} seeds, max relative error {worst:.2e}", cases.len(), opts.seeds))
}

fn small_encoder() -> EncoderConfig {
    EncoderConfig {
        width: 8,
        blocks: 1,
        heads: 2,
        ff_width: 12,
        conv_kernels: vec![6, 3],
        conv_strides: vec![3, 2],
        dropout: 0.0,
        ..EncoderConfig::audio_default()
    }
}

/// Checks `loss` against every parameter of `store` except key-projection
/// biases. Those shift every score in a row equally, so their exact gradient
/// is zero and a finite difference only sees rounding; they are held
/// constant and their analytic gradient is required to vanish instead.
fn store_grad_check(
    store: &ParamStore,
    loss: impl Fn(&mut Session) -> Result<Var, NumError>,
    seed: u64,
    coords: usize,
) -> Result<GradCheckReport, String> {
    let key_bias: Vec<bool> = store.ids().map(|id| store.name(id).ends_with(".k.bias")).collect();
    let mut g = Graph::new();
    let vars: Vec<Var> = store.values().into_iter().map(|v| g.param(v)).collect();
    let out = loss(&mut Session::with_bindings(&mut g, store, &vars)).map_err(|e| e.to_string())?;
    let grads = g.backward(out).map_err(|e| e.to_string())?;
    for (i, id) in store.ids().enumerate() {
        if key_bias[i] && grads.get_or_zeros(vars[i]).data().iter().any(|v| v.abs() > 1e-12) {
            return Err(format!("{} has a nonzero gradient", store.name(id)));
        }
    }
    let checked: Vec<RealArray> = store
        .values()
        .into_iter()
        .zip(&key_bias)
        .filter(|(_, k)| !**k)
        .map(|(v, _)| v)
        .collect();
    grad_check(
        |g, vars| {
            let mut it = vars.iter();
            let all: Vec<Var> = store
                .ids()
                .zip(&key_bias)
                .map(|(id, k)| if *k { g.constant(store.get(id).clone()) } else { *it.next().expect("one var per checked input") })
                .collect();
            loss(&mut Session::with_bindings(g, store, &all))
        },
        &checked,
        &GradCheckOptions {
            max_coords_per_input: Some(coords),
            seed,
            ..GradCheckOptions::default()
        },
    )
    .map_err(|e| e.to_string())
}

/// Audio and text encoders end to end, through a shared cross-entropy.
pub fn gradients_encoders(opts: &CheckOptions) -> Result<String, String> {
    let mut worst = 0.0f64;
    for seed in 0..opts.seeds {
        let mut store = ParamStore::new();
        let audio = AudioEncoder::new(&mut store, "a", EncoderConfig { seed, ..small_encoder() }).map_err(|e| e.to_string())?;
        let text_cfg = EncoderConfig {
            seed: seed + 50,
            vocab_size: 6,
            ..small_encoder()
        };
        let text = TextEncoder::new(&mut store, "t", text_cfg).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Waveform::new(RealArray::uniform(&[40], -0.9, 0.9, &mut rng).into_data(), 1000).map_err(|e| e.to_string())?;
        let tokens = TokenSequence::new(vec![0, 3, 5, 3], Language::English);
        let label = (seed % 3) as usize;
        let report = store_grad_check(
            &store,
            |s| {
                let a = audio.forward(s, &w).map_err(contract)?;
                let t = text.forward(s, &tokens).map_err(contract)?;
                let z = s.graph.add(a.pooled, t.pooled)?;
                let z = s.graph.slice_cols(z, 0, 3)?;
                s.graph.cross_entropy(z, label)
            },
            seed,
            6,
        )
        .map_err(|e| format!("seed {seed}: {e}"))?;
        if !(report.max_rel_error < GRAD_TOL) {
            return Err(format!("seed {seed}: relative error {:.3e} at {:?}", report.max_rel_error, report.worst));
        }
        worst = worst.max(report.max_rel_error);
    }
    Ok(format!("{} seeds, max relative error {worst:.2e}", opts.seeds))
}

/// Unrolled Sinkhorn plan and OTK pooling.
pub fn gradients_sinkhorn_otk(opts: &CheckOptions) -> Result<String, String> {
    let mut worst = 0.0f64;
    for seed in 0..opts.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cost = RealArray::randn(&[4, 3], 1.0, &mut rng);
        let w = RealArray::randn(&[4, 3], 1.0, &mut rng);
        // A tight tolerance sends every perturbed evaluation to the same fixed point.
        let c = SinkhornConfig {
            epsilon: 0.5,
            tol: 1e-13,
            max_iter: 2000,
        };
        let plan = grad_check(
            |g, v| {
                let (plan, _) = sinkhorn_graph(g, v[0], &c).map_err(contract)?;
                let wv = g.constant(w.clone());
                let weighted = g.mul(plan, wv)?;
                Ok(g.sum(weighted))
            },
            &[cost],
            &GradCheckOptions { seed, ..GradCheckOptions::default() },
        )
        .map_err(|e| format!("sinkhorn seed {seed}: {e}"))?;

        let x = RealArray::randn(&[5, 4], 1.0, &mut rng);
        let z = RealArray::randn(&[2, 4], 1.0, &mut rng);
        let w = RealArray::randn(&[8], 1.0, &mut rng);
        let c = SinkhornConfig { epsilon: 0.1, ..c };
        let otk = grad_check(
            |g, v| {
                let (out, _) = otk_pool_graph(g, v[0], v[1], &c).map_err(contract)?;
                let wv = g.constant(w.clone());
                let weighted = g.mul(out, wv)?;
                Ok(g.sum(weighted))
            },
            &[x, z],
            &GradCheckOptions { seed, ..GradCheckOptions::default() },
        )
        .map_err(|e| format!("otk seed {seed}: {e}"))?;
        for (what, r) in [("sinkhorn", plan), ("otk", otk)] {
            if !(r.max_rel_error < GRAD_TOL_SINKHORN) {
                return Err(format!("{what} seed {seed}: relative error {:.3e}", r.max_rel_error));
            }
            worst = worst.max(r.max_rel_error);
        }
    }
    Ok(format!("{} seeds, max relative error {worst:.2e}", opts.seeds))
}

/// Tiny configuration of `variant` for gradient checking.
pub fn grad_check_config(variant: ModelVariant, seed: u64) -> ModelConfig {
    let enc = EncoderConfig {
        conv_kernels: vec![8, 3],
        conv_strides: vec![4, 2],
        ..small_encoder()
    };
    ModelConfig {
        variant,
        audio: enc.clone(),
        text: EncoderConfig { vocab_size: 10, ..enc },
        fusion: FusionConfig {
            heads: 2,
            ff_width: 12,
            references: 2,
            dropout: 0.0,
            sinkhorn: SinkhornConfig {
                epsilon: 0.5,
                tol: 1e-13,
                max_iter: 2000,
            },
            ..FusionConfig::default()
        },
        head_hidden: 6,
        seed,
    }
}

/// Gradient of the full weighted objective of `variant` on one short
/// example, against every parameter.
pub fn model_grad_check(variant: ModelVariant, seed: u64) -> Result<GradCheckReport, String> {
    let model = Model::new(grad_check_config(variant, seed)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let label = SpeechActLabel::ALL[(seed % 3) as usize];
    let f0 = rng.random_range(0.05..0.08);
    let slope = [0.0, 1.0, -1.0][label.index()];
    let samples = (0..64)
        .map(|k| {
            let t = k as f64 / 64.0;
            0.8 * (2.0 * std::f64::consts::PI * f0 * k as f64 * (1.0 + 0.5 * slope * t)).sin()
        })
        .collect();
    let mut tokens = vec![label.index() + 1];
    tokens.extend((0..3).map(|_| rng.random_range(4..10)));
    let ex = Example {
        waveform: Waveform::new(samples, 1000).map_err(|e| e.to_string())?,
        english: TokenSequence::new(tokens, Language::English),
        label,
    };
    let weights = LossWeights::new(0.2, 0.5, 0.3).map_err(|e| e.to_string())?;
    store_grad_check(
        &model.store,
        |s| {
            model
                .forward(s, &ex.waveform, &ex.english, ex.label, &weights)
                .map(|o| o.loss)
                .map_err(contract)
        },
        seed,
        4,
    )
}

/// Forward pass plus joint loss of all four variants.
pub fn gradients_full_objective(opts: &CheckOptions) -> Result<String, String> {
    let mut worst = [0.0f64; 4];
    for (v, variant) in ModelVariant::ALL.into_iter().enumerate() {
        let tol = if variant == ModelVariant::BeatsOtk { GRAD_TOL_SINKHORN } else { GRAD_TOL };
        for seed in 0..opts.seeds {
            let r = model_grad_check(variant, seed).map_err(|e| format!("{variant} seed {seed}: {e}"))?;
            if !(r.max_rel_error < tol) {
                return Err(format!("{variant} seed {seed}: relative error {:.3e} at {:?}", r.max_rel_error, r.worst));
            }
            worst[v] = worst[v].max(r.max_rel_error);
        }
    }
    let parts: Vec<String> = ModelVariant::ALL.iter().zip(worst).map(|(v, w)| format!("{v} {w:.1e}")).collect();
    Ok(format!("{} seeds each: {}", opts.seeds, parts.join(", ")))
}

/// 100 uniform costs up to 16x8 at the default epsilon.
pub fn sinkhorn_contract(opts: &CheckOptions) -> Result<String, String> {
    let cfg = SinkhornConfig {
        tol: opts.sinkhorn_tol,
        ..SinkhornConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut most = 0;
    for case in 0..100 {
        let n = rng.random_range(1..=16);
        let p = rng.random_range(1..=8);
        let cost = RealArray::uniform(&[n, p], 0.0, 1.0, &mut rng);
        let plan = sinkhorn(&cost, &cfg).map_err(|e| format!("case {case} (seed 8): {e}"))?;
        if !(plan.converged && plan.residual < SINKHORN_RESIDUAL && plan.iterations <= 500) {
            return Err(format!(
                "case {case} (seed 8) {n}x{p}: marginal residual {:.3e} after {} iterations",
                plan.residual, plan.iterations
            ));
        }
        if let Some(k) = plan.residual_history.windows(2).position(|w| w[1] > w[0] + 1e-12) {
            return Err(format!("case {case} (seed 8): residual rose at sweep {}", k + 2));
        }
        if plan.plan.data().iter().any(|v| *v < 0.0) {
            return Err(format!("case {case} (seed 8): negative plan entry"));
        }
        most = most.max(plan.iterations);
    }
    Ok(format!("100 costs, at most {most} sweeps"))
}

/// Entropic cost at epsilon 1e-3 within 1% of the enumerated optimum.
pub fn sinkhorn_exact_oracle(_: &CheckOptions) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut gap = 0.0f64;
    for n in 2..=5 {
        for case in 0..20 {
            let cost = RealArray::uniform(&[n, n], 0.0, 1.0, &mut rng);
            let exact = exact_ot_oracle(&cost).map_err(|e| e.to_string())?;
            let plan = sinkhorn(
                &cost,
                &SinkhornConfig {
                    epsilon: 1e-3,
                    tol: 1e-5,
                    max_iter: 100_000,
                },
            )
            .map_err(|e| format!("n={n} case {case} (seed 21): {e}"))?;
            let entropic = plan.transport_cost(&cost);
            if !plan.converged || entropic > exact.cost * 1.01 || entropic < exact.cost - n as f64 * 1e-5 {
                return Err(format!(
                    "n={n} case {case} (seed 21): entropic {entropic:.6} vs exact {:.6} (converged {})",
                    exact.cost, plan.converged
                ));
            }
            gap = gap.max(entropic / exact.cost - 1.0);
        }
    }
    Ok(format!("80 costs, worst relative gap {gap:.2e}"))
}

/// Identity case and 50 row permutations per instance.
pub fn otk_permutation_invariance(opts: &CheckOptions) -> Result<String, String> {
    use crate::encoders::{FeatureSequence, Modality};
    let seq = |values: RealArray| FeatureSequence {
        values,
        modality: Modality::Fused,
    };
    let x = RealArray::matrix(1, 3, vec![0.3, -1.2, 2.0]).expect("shape");
    let z = RealArray::matrix(1, 3, vec![1.0, 0.5, -0.1]).expect("shape");
    let out = otk_pool(&seq(x.clone()), &z, &SinkhornConfig::default()).map_err(|e| e.to_string())?;
    if out.max_abs_diff(&x) > 1e-15 {
        return Err(format!("identity case differs by {:.3e}", out.max_abs_diff(&x)));
    }
    let c = SinkhornConfig {
        tol: 1e-12,
        ..SinkhornConfig::default()
    };
    let mut worst = 0.0f64;
    for seed in 0..opts.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=12);
        let p = rng.random_range(1..=4);
        let x = RealArray::randn(&[n, 4], 1.0, &mut rng);
        let z = RealArray::randn(&[p, 4], 0.5, &mut rng);
        let base = otk_pool(&seq(x.clone()), &z, &c).map_err(|e| format!("seed {seed}: {e}"))?;
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..50 {
            order.shuffle(&mut rng);
            let rows: Vec<f64> = order.iter().flat_map(|&i| x.row(i).to_vec()).collect();
            let px = RealArray::matrix(n, 4, rows).expect("shape");
            let d = otk_pool(&seq(px), &z, &c).map_err(|e| format!("seed {seed}: {e}"))?.max_abs_diff(&base);
            if !(d < 1e-9) {
                return Err(format!("seed {seed}: permuted output differs by {d:.3e}"));
            }
            worst = worst.max(d);
        }
    }
    Ok(format!("{} instances x 50 permutations, max difference {worst:.2e}", opts.seeds))
}

pub fn joint_loss_properties(opts: &CheckOptions) -> Result<String, String> {
    let w = LossWeights::default();
    let at = |w: &LossWeights, l: [f64; 3]| joint_loss(w, l[0], l[1], l[2]).map_err(|e| e.to_string());
    let v = at(&w, [1.0, 2.0, 3.0])?;
    if (v - 2.0).abs() > 1e-12 {
        return Err(format!("(0.15, 0.7, 0.15) on (1, 2, 3) gave {v}"));
    }
    if at(&w, [0.0; 3])? != 0.0 {
        return Err("nonzero loss at zero".into());
    }
    for seed in 0..opts.seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: f64 = rng.random_range(0.0..0.5);
        let w = LossWeights::new(a, 1.0 - 2.0 * a, a).map_err(|e| e.to_string())?;
        let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..5.0));
        let y: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..5.0));
        let (s, t) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        let combined = at(&w, std::array::from_fn(|i| s * x[i] + t * y[i]))?;
        let split = s * at(&w, x)? + t * at(&w, y)?;
        if (combined - split).abs() > 1e-12 * (1.0 + split.abs()) {
            return Err(format!("seed {seed}: not linear ({combined} vs {split})"));
        }
    }
    let betas: Vec<f64> = DEFAULT_ALPHA_GRID
        .iter()
        .map(|&a| LossWeights::ablation(a).map(|w| w.beta).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let expected = [0.8, 0.7, 0.6, 0.5, 0.4];
    if betas.iter().zip(expected).any(|(b, e)| (b - e).abs() > 1e-12) {
        return Err(format!("ablation betas {betas:?}"));
    }
    Ok(format!("arithmetic case 2.0, linear over {} seeds, betas {expected:?}", opts.seeds))
}

pub fn wav_round_trip(_: &CheckOptions) -> Result<String, String> {
    let path = std::path::Path::new("<memory>");
    let rate = 44_100;
    let sine: Vec<f64> = (0..rate as usize)
        .map(|i| 0.9 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / rate as f64).sin())
        .collect();
    let mut worst = 0.0f64;
    for samples in [sine, vec![0.123_456]] {
        let w = Waveform::new(samples, rate).map_err(|e| e.to_string())?;
        let bytes = encode_wav(&w);
        let byte_rate = u32::from_le_bytes(bytes[28..32].try_into().expect("4 bytes"));
        if byte_rate != 88_200 {
            return Err(format!("byte rate field {byte_rate}"));
        }
        let back = decode_wav(&bytes, path).map_err(|e| e.to_string())?;
        let err = w.samples().iter().zip(back.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if back.len() != w.len() || err > 1.0 / 32768.0 {
            return Err(format!("round trip error {err:.3e}"));
        }
        worst = worst.max(err);
    }
    Ok(format!("440 Hz sine and 1-sample file, max error {worst:.2e}, byte rate 88200"))
}

/// Default corpus: counts, Bengali lengths, sample rate and rerun stability.
pub fn data_fidelity(_: &CheckOptions) -> Result<String, String> {
    let cfg = GeneratorConfig::default();
    let first = generate_records(&cfg).map_err(|e| e.to_string())?;
    let mut counts = [0; 3];
    for (r, w) in &first {
        counts[r.label.index()] += 1;
        if !(5..=7).contains(&r.bengali.len()) {
            return Err(format!("{} (seed {}) has {} Bengali tokens", r.id, cfg.seed, r.bengali.len()));
        }
        if w.sample_rate() != 44_100 {
            return Err(format!("{} has sample rate {}", r.id, w.sample_rate()));
        }
    }
    if counts != [25, 35, 25] {
        return Err(format!("class counts {counts:?}"));
    }
    let second = generate_records(&cfg).map_err(|e| e.to_string())?;
    for ((ra, wa), (rb, wb)) in first.iter().zip(&second) {
        if ra != rb || encode_wav(wa) != encode_wav(wb) {
            return Err(format!("{} differs on rerun with seed {}", ra.id, cfg.seed));
        }
    }
    Ok("85 records (25/35/25), Bengali lengths in [5, 7], 44100 Hz, identical on rerun".into())
}

/// Accuracy of the (audio, text, bimodal) reference classifiers over `n`
/// utterances with labels drawn round-robin.
pub fn oracle_accuracies(cfg: &GeneratorConfig, n: usize, seed: u64) -> Result<[f64; 3], String> {
    let mut hits = [0usize; 3];
    for i in 0..n {
        let label = SpeechActLabel::ALL[i % 3];
        let (w, _, en) = synth_utterance(label, cfg, derive(seed, &[i as u64])).map_err(|e| e.to_string())?;
        hits[0] += (audio_oracle(&w).0 == label) as usize;
        hits[1] += (text_oracle(&en) == Some(label)) as usize;
        hits[2] += (bimodal_oracle(&w, &en) == label) as usize;
    }
    Ok(hits.map(|h| h as f64 / n as f64))
}

/// Noiseless corpus solvable by the rule-based classifier; at marker noise
/// 0.2 the bimodal rule beats both unimodal ones.
pub fn oracle_separability(_: &CheckOptions) -> Result<String, String> {
    let clean = GeneratorConfig {
        marker_noise: 0.0,
        ..GeneratorConfig::default().noiseless()
    };
    let acc = oracle_accuracies(&clean, 1000, 2)?;
    if acc[2] != 1.0 {
        return Err(format!("noiseless bimodal oracle accuracy {} (seed 2)", acc[2]));
    }
    let noisy = GeneratorConfig {
        marker_noise: 0.2,
        ..GeneratorConfig::default()
    };
    let [audio, text, both] = oracle_accuracies(&noisy, 1000, 1)?;
    if !(both > audio && both > text) {
        return Err(format!("seed 1: bimodal {both:.3} vs audio {audio:.3}, text {text:.3}"));
    }
    Ok(format!("noiseless 1.000; at q=0.2 audio {audio:.3}, text {text:.3}, bimodal {both:.3}"))
}
