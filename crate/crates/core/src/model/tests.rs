use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::encoders::{EncoderConfig, Language, TokenSequence, Waveform};
use crate::fusion::FusionConfig;

const VOCAB: usize = 10;

pub(crate) fn tiny_config(variant: ModelVariant) -> ModelConfig {
    let enc = EncoderConfig {
        width: 8,
        blocks: 1,
        heads: 2,
        ff_width: 12,
        conv_kernels: vec![8, 3],
        conv_strides: vec![4, 2],
        dropout: 0.0,
        ..EncoderConfig::audio_default()
    };
    ModelConfig {
        variant,
        audio: enc.clone(),
        text: EncoderConfig {
            vocab_size: VOCAB,
            ..enc
        },
        fusion: FusionConfig {
            heads: 2,
            ff_width: 12,
            references: 2,
            dropout: 0.0,
            ..FusionConfig::default()
        },
        head_hidden: 6,
        seed: 5,
    }
}

/// Short tones whose pitch direction and first token encode the label.
pub(crate) fn toy_examples(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = SpeechActLabel::ALL[i % 3];
            let slope = [0.0, 1.0, -1.0][label.index()];
            let f0 = rng.random_range(0.05..0.08);
            let samples = (0..64)
                .map(|k| {
                    let t = k as f64 / 64.0;
                    0.8 * (2.0 * std::f64::consts::PI * f0 * k as f64 * (1.0 + 0.5 * slope * t)).sin()
                })
                .collect();
            let mut tokens = vec![label.index() + 1];
            tokens.extend((0..3).map(|_| rng.random_range(4..VOCAB)));
            Example {
                waveform: Waveform::new(samples, 1000).unwrap(),
                english: TokenSequence::new(tokens, Language::English),
                label,
            }
        })
        .collect()
}

#[test]
fn label_codes() {
    assert_eq!(SpeechActLabel::Request.index(), 0);
    assert_eq!(SpeechActLabel::Question.index(), 1);
    assert_eq!(SpeechActLabel::Order.index(), 2);
    assert_eq!(SpeechActLabel::from_index(3), None);
    assert_eq!("question".parse::<SpeechActLabel>().unwrap(), SpeechActLabel::Question);
    for v in ModelVariant::ALL {
        assert_eq!(v.name().parse::<ModelVariant>().unwrap(), v);
    }
}

#[test]
fn joint_loss_examples() {
    let only_fused = LossWeights::new(0.0, 1.0, 0.0).unwrap();
    assert_eq!(joint_loss(&only_fused, 3.0, 1.25, 7.0).unwrap(), 1.25);
    let best = LossWeights::new(0.15, 0.7, 0.15).unwrap();
    assert!((joint_loss(&best, 1.0, 2.0, 3.0).unwrap() - 2.0).abs() < 1e-15);
    assert!((joint_loss(&best, 0.8, 0.8, 0.8).unwrap() - 0.8).abs() < 1e-15);
    assert_eq!(joint_loss(&best, 0.0, 0.0, 0.0).unwrap(), 0.0);

    assert!(LossWeights::new(0.2, 0.7, 0.2).is_err());
    assert!(LossWeights::new(-0.1, 1.0, 0.1).is_err());
    assert!(joint_loss(&best, f64::NAN, 0.0, 0.0).is_err());
    assert!(joint_loss(&best, -1.0, 0.0, 0.0).is_err());
}

#[test]
fn joint_loss_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let a: f64 = rng.random_range(0.0..0.5);
        let w = LossWeights::ablation(a.max(1e-3)).unwrap();
        let l: [f64; 3] = [rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)];
        let m: [f64; 3] = [rng.random_range(0.0..5.0), rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)];
        let c = rng.random_range(0.0..10.0);
        let f = |x: [f64; 3]| joint_loss(&w, x[0], x[1], x[2]).unwrap();
        let sum = [l[0] + m[0], l[1] + m[1], l[2] + m[2]];
        assert!((f(sum) - f(l) - f(m)).abs() < 1e-12);
        assert!((f([c * l[0], c * l[1], c * l[2]]) - c * f(l)).abs() < 1e-12);
    }
}

#[test]
fn ablation_weights() {
    let betas: Vec<f64> = DEFAULT_ALPHA_GRID.iter().map(|&a| LossWeights::ablation(a).unwrap().beta).collect();
    let expected = [0.8, 0.7, 0.6, 0.5, 0.4];
    for (b, e) in betas.iter().zip(expected) {
        assert!((b - e).abs() < 1e-12);
    }
    for bad in [0.0, 0.5, 0.7, -0.1, f64::NAN] {
        assert!(LossWeights::ablation(bad).is_err(), "{bad}");
    }
}

#[test]
fn probabilities_are_distributions() {
    let examples = toy_examples(6, 1);
    for variant in ModelVariant::ALL {
        let model = Model::new(tiny_config(variant)).unwrap();
        for ex in &examples {
            let p = model.predict(&ex.waveform, &ex.english).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|v| *v >= 0.0));
        }
    }
}

#[test]
fn speech_only_ignores_text() {
    let model = Model::new(tiny_config(ModelVariant::SpeechOnly)).unwrap();
    let ex = &toy_examples(1, 2)[0];
    let a = model.predict(&ex.waveform, &ex.english).unwrap();
    let other = TokenSequence::new(vec![3, 9, 9, 9, 9], Language::English);
    let b = model.predict(&ex.waveform, &other).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn forward_is_reproducible() {
    let ex = &toy_examples(2, 4)[1];
    for variant in [ModelVariant::BeatsXformer, ModelVariant::BeatsOtk] {
        let a = Model::new(tiny_config(variant)).unwrap().predict(&ex.waveform, &ex.english).unwrap();
        let b = Model::new(tiny_config(variant)).unwrap().predict(&ex.waveform, &ex.english).unwrap();
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
    }
}

#[test]
fn variant_losses_are_wired() {
    let ex = &toy_examples(1, 9)[0];
    let w = LossWeights::new(0.2, 0.5, 0.3).unwrap();
    for variant in ModelVariant::ALL {
        let model = Model::new(tiny_config(variant)).unwrap();
        let mut g = Graph::new();
        let mut s = Session::eval(&mut g, &model.store);
        let out = model.forward(&mut s, &ex.waveform, &ex.english, ex.label, &w).unwrap();
        let total = g.value(out.loss).item();
        let h = out.head_losses;
        match variant {
            ModelVariant::SpeechOnly => {
                assert_eq!((h.fused, h.text), (None, None));
                assert_eq!(total, h.speech.unwrap());
            }
            ModelVariant::BimodalConcat => {
                assert_eq!((h.speech, h.text), (None, None));
                assert_eq!(total, h.fused.unwrap());
            }
            _ => {
                let expected = joint_loss(&w, h.speech.unwrap(), h.fused.unwrap(), h.text.unwrap()).unwrap();
                assert!((total - expected).abs() < 1e-12);
                // The prediction follows the fused head.
                assert!((-out.probabilities[ex.label.index()].ln() - h.fused.unwrap()).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let mut model = Model::new(tiny_config(ModelVariant::BeatsOtk)).unwrap();
    let before = model.store.clone();
    let cfg = TrainConfig {
        epochs: 2,
        learning_rate: 0.0,
        ..TrainConfig::default()
    };
    train(&mut model, &toy_examples(10, 3), &cfg).unwrap();
    assert_eq!(model.store, before);
}

#[test]
fn single_batch_loss_decreases() {
    for variant in ModelVariant::ALL {
        let mut model = Model::new(tiny_config(variant)).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        let report = train(&mut model, &toy_examples(8, 6), &cfg).unwrap();
        assert_eq!(report.step_losses.len(), 10);
        for w in report.step_losses.windows(2) {
            assert!(w[1] < w[0], "{variant}: {:?}", report.step_losses);
        }
    }
}

#[test]
fn training_is_deterministic() {
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 3,
        seed: 11,
        ..TrainConfig::default()
    };
    let mut c = tiny_config(ModelVariant::BeatsXformer);
    c.audio.dropout = 0.1;
    c.fusion.dropout = 0.1;
    let data = toy_examples(9, 8);
    let mut a = Model::new(c.clone()).unwrap();
    let mut b = Model::new(c).unwrap();
    let ra = train(&mut a, &data, &cfg).unwrap();
    let rb = train(&mut b, &data, &cfg).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(ra.step_losses.len(), 6);
    assert_eq!(a.store, b.store);
}

#[test]
fn training_rejects_bad_input() {
    let mut model = Model::new(tiny_config(ModelVariant::SpeechOnly)).unwrap();
    assert!(matches!(train(&mut model, &[], &TrainConfig::default()), Err(ModelError::EmptySplit(_))));
    let cfg = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(train(&mut model, &toy_examples(3, 1), &cfg).is_err());
}

#[test]
fn divergent_training_names_epoch_and_batch() {
    let mut model = Model::new(tiny_config(ModelVariant::SpeechOnly)).unwrap();
    // Poison one parameter: the first forward pass becomes non-finite.
    let id = model.store.ids().next().unwrap();
    model.store.get_mut(id).data_mut()[0] = f64::NAN;
    let err = train(&mut model, &toy_examples(4, 1), &TrainConfig::default()).unwrap_err();
    match err {
        ModelError::NonFiniteLoss { epoch: 1, batch: 1 } => {}
        other => panic!("{other}"),
    }
}

#[test]
fn argmax_prefers_lowest_index() {
    assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    assert_eq!(argmax(&[0.5, 0.5, 0.0]), 0);
    assert_eq!(argmax(&[1.0 / 3.0; 3]), 0);
    assert_eq!(argmax(&[0.1, 0.2, 0.7]), 2);
}

#[test]
fn metrics_examples() {
    let perfect = ConfusionMatrix {
        counts: [[4, 0, 0], [0, 5, 0], [0, 0, 4]],
    };
    let m = perfect.metrics();
    assert!(m.per_class.iter().all(|c| c.precision == 1.0 && c.recall == 1.0 && c.f1 == 1.0));

    let all_question = ConfusionMatrix {
        counts: [[0, 25, 0], [0, 35, 0], [0, 25, 0]],
    };
    let m = all_question.metrics();
    let q = m.per_class[1];
    assert_eq!(q.recall, 1.0);
    assert!((q.precision - 35.0 / 85.0).abs() < 1e-15);
    for c in [m.per_class[0], m.per_class[2]] {
        assert_eq!((c.precision, c.recall, c.f1), (0.0, 0.0, 0.0));
        assert!(c.precision_undefined && !c.recall_undefined);
    }
}

#[test]
fn metrics_match_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let pairs: Vec<(usize, usize)> = (0..rng.random_range(1..40))
            .map(|_| (rng.random_range(0..3), rng.random_range(0..3)))
            .collect();
        let m = ConfusionMatrix::from_pairs(
            pairs
                .iter()
                .map(|&(a, p)| (SpeechActLabel::ALL[a], SpeechActLabel::ALL[p])),
        )
        .metrics();
        for c in 0..3 {
            let tp = pairs.iter().filter(|&&(a, p)| a == c && p == c).count() as f64;
            let fp = pairs.iter().filter(|&&(a, p)| a != c && p == c).count() as f64;
            let fnn = pairs.iter().filter(|&&(a, p)| a == c && p != c).count() as f64;
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
            let f = if tp > 0.0 { 2.0 * tp / (2.0 * tp + fp + fnn) } else { 0.0 };
            let got = m.per_class[c];
            assert!((got.precision - p).abs() < 1e-12);
            assert!((got.recall - r).abs() < 1e-12);
            assert!((got.f1 - f).abs() < 1e-12);
        }
    }
}

#[test]
fn evaluate_produces_confusion_counts() {
    let data = toy_examples(7, 2);
    let model = Model::new(tiny_config(ModelVariant::BimodalConcat)).unwrap();
    let e = evaluate(&model, &data).unwrap();
    assert_eq!(e.confusion.total(), 7);
    assert_eq!(e.predictions.len(), 7);
    assert!(matches!(evaluate(&model, &[]), Err(ModelError::EmptySplit(_))));
}

#[test]
fn ablation_grid_shapes() {
    let data = toy_examples(6, 1);
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let base = tiny_config(ModelVariant::BeatsXformer);
    let table = ablation_sweep(&base, &cfg, &data, &data, &[0.15], &[FusionScheme::Xformer], 1).unwrap();
    assert_eq!(table.cells.len(), 1);
    assert!((table.cells[0].beta - 0.7).abs() < 1e-12);
    assert_eq!(table.best_alpha(FusionScheme::Xformer), Some(0.15));
    assert_eq!(table.best_alpha(FusionScheme::Otk), None);

    let err = ablation_sweep(&base, &cfg, &data, &data, &[0.1, 0.5], &[FusionScheme::Otk], 1).unwrap_err();
    assert!(matches!(err, ModelError::Weights(_)));

    let two = ablation_sweep(&base, &cfg, &data, &data, &[0.1, 0.3], &[FusionScheme::Xformer, FusionScheme::Otk], 3).unwrap();
    let serial = ablation_sweep(&base, &cfg, &data, &data, &[0.1, 0.3], &[FusionScheme::Xformer, FusionScheme::Otk], 1).unwrap();
    assert_eq!(two, serial);
    let order: Vec<_> = two.cells.iter().map(|c| (c.scheme, c.alpha)).collect();
    assert_eq!(
        order,
        vec![(FusionScheme::Xformer, 0.1), (FusionScheme::Xformer, 0.3), (FusionScheme::Otk, 0.1), (FusionScheme::Otk, 0.3)]
    );
}

#[test]
fn save_and_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let mut model = Model::new(tiny_config(ModelVariant::BeatsOtk)).unwrap();
    train(&mut model, &toy_examples(4, 3), &TrainConfig { epochs: 1, ..TrainConfig::default() }).unwrap();
    model.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back.store, model.store);
    assert_eq!(back.config, model.config);
    std::fs::write(&path, "{\"config\": 1}").unwrap();
    assert!(matches!(Model::load(&path), Err(ModelError::Serde { .. })));
}

