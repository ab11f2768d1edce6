#![allow(clippy::needless_range_loop)] // matrix index loops read better here

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{zero_attention_scores, BlockShape, TransformerBlock};
use super::*;
use crate::numcore::{Graph, ParamStore, RealArray, Session};

fn small_audio_config() -> EncoderConfig {
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

fn tone(freq: impl Fn(f64) -> f64, secs: f64, sr: u32) -> Waveform {
    let n = (secs * sr as f64) as usize;
    let mut phase = 0.0;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            phase += 2.0 * std::f64::consts::PI * freq(t) / sr as f64;
            0.5 * phase.sin() + 0.25 * (2.0 * phase).sin()
        })
        .collect();
    Waveform::new(samples, sr).unwrap()
}

fn frame_count_oracle(len: usize, kernels: &[usize], strides: &[usize]) -> usize {
    let mut l = len;
    for (&k, &s) in kernels.iter().zip(strides) {
        let mut count = 0;
        let mut start = 0;
        while start + k <= l {
            count += 1;
            start += s;
        }
        l = count;
    }
    l
}

#[test]
fn conv_frame_count_examples() {
    let mut store = ParamStore::new();
    let cfg = EncoderConfig {
        conv_kernels: vec![2],
        conv_strides: vec![2],
        ..small_audio_config()
    };
    let enc = AudioEncoder::new(&mut store, "a", cfg).unwrap();
    assert_eq!(enc.frame_count(10), Some(5));

    let clip = (1.3 * 44_100.0) as usize;
    let d = EncoderConfig::audio_default();
    let expected = frame_count_oracle(clip, &d.conv_kernels, &d.conv_strides);
    let mut store = ParamStore::new();
    let enc = AudioEncoder::new(&mut store, "a", d).unwrap();
    assert_eq!(enc.frame_count(clip), Some(expected));
    assert!((50..=80).contains(&expected), "{expected}");

    // The three-layer [10,8,4]/[5,4,2] stack from the wav2vec-like layout.
    let mut store = ParamStore::new();
    let wide = EncoderConfig {
        conv_kernels: vec![10, 8, 4],
        conv_strides: vec![5, 4, 2],
        ..small_audio_config()
    };
    let enc = AudioEncoder::new(&mut store, "a", wide).unwrap();
    assert_eq!(enc.frame_count(clip), Some(frame_count_oracle(clip, &[10, 8, 4], &[5, 4, 2])));
    assert_eq!(enc.frame_count(clip), Some(1431));
}

#[test]
fn short_waveform_reports_minimum_length() {
    let mut store = ParamStore::new();
    let enc = AudioEncoder::new(&mut store, "a", small_audio_config()).unwrap();
    // (1 - 1)·2 + 3 = 3 frames needed from the first layer: (3 - 1)·3 + 6 = 12.
    assert_eq!(enc.required_len(), 12);
    let w = Waveform::new(vec![0.1; 11], 100).unwrap();
    let mut g = Graph::new();
    let mut s = Session::eval(&mut g, &store);
    match enc.forward(&mut s, &w) {
        Err(EncoderError::TooShort { len: 11, required: 12 }) => {}
        other => panic!("unexpected {:?}", other.err()),
    }
    let w = Waveform::new(vec![0.1; 12], 100).unwrap();
    assert_eq!(enc.frame_count(w.len()), Some(1));
}

#[test]
fn zero_waveform_gives_zero_features() {
    let mut store = ParamStore::new();
    let enc = AudioEncoder::new(&mut store, "a", small_audio_config()).unwrap();
    let w = Waveform::new(vec![0.0; 200], 1000).unwrap();
    let mut g = Graph::new();
    let mut s = Session::eval(&mut g, &store);
    let x = enc.positional_encode(&mut s, &w).unwrap();
    assert!(g.value(x).data().iter().all(|v| *v == 0.0));
}

#[test]
fn config_validation() {
    let mut store = ParamStore::new();
    let bad = EncoderConfig {
        heads: 3,
        ..small_audio_config()
    };
    assert!(matches!(AudioEncoder::new(&mut store, "a", bad), Err(EncoderError::Config(_))));
    let bad = EncoderConfig {
        conv_strides: vec![0, 1],
        ..small_audio_config()
    };
    assert!(AudioEncoder::new(&mut store, "a", bad).is_err());
    assert!(TextEncoder::new(&mut store, "t", EncoderConfig::text_default(0)).is_err());
}

/// Straight-line reimplementation of one post-norm block on plain vectors.
pub(crate) mod oracle {
    use crate::numcore::{ParamStore, RealArray};
    use crate::encoders::layers::{LayerNorm, Linear, TransformerBlock};

    pub type Mat = Vec<Vec<f64>>;

    pub fn linear(store: &ParamStore, l: &Linear, x: &Mat) -> Mat {
        let w = store.get(l.weight);
        let b = store.get(l.bias).data();
        let (k, n) = w.dims2();
        x.iter()
            .map(|row| {
                (0..n)
                    .map(|j| b[j] + (0..k).map(|p| row[p] * w.get(p, j)).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    pub fn layer_norm(store: &ParamStore, ln: &LayerNorm, x: &Mat) -> Mat {
        let g = store.get(ln.gain).data();
        let b = store.get(ln.bias).data();
        x.iter()
            .map(|row| {
                let n = row.len() as f64;
                let mu = row.iter().sum::<f64>() / n;
                let var = row.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
                row.iter()
                    .enumerate()
                    .map(|(j, v)| g[j] * (v - mu) / (var + ln.eps).sqrt() + b[j])
                    .collect()
            })
            .collect()
    }

    pub fn gelu(x: f64) -> f64 {
        0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
    }

    pub fn attention(store: &ParamStore, b: &crate::encoders::layers::MultiHeadAttention, xq: &Mat, xkv: &Mat) -> (Mat, Vec<Mat>) {
        let q = linear(store, &b.query, xq);
        let k = linear(store, &b.key, xkv);
        let v = linear(store, &b.value, xkv);
        let hw = b.width / b.heads;
        let mut merged = vec![vec![0.0; b.width]; xq.len()];
        let mut all = Vec::new();
        for h in 0..b.heads {
            let mut weights = vec![vec![0.0; xkv.len()]; xq.len()];
            for i in 0..xq.len() {
                let scores: Vec<f64> = (0..xkv.len())
                    .map(|j| (0..hw).map(|c| q[i][h * hw + c] * k[j][h * hw + c]).sum::<f64>() / (hw as f64).sqrt())
                    .collect();
                let mx = scores.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
                let z: f64 = e.iter().sum();
                for j in 0..xkv.len() {
                    weights[i][j] = e[j] / z;
                    for c in 0..hw {
                        merged[i][h * hw + c] += weights[i][j] * v[j][h * hw + c];
                    }
                }
            }
            all.push(weights);
        }
        (linear(store, &b.output, &merged), all)
    }

    pub fn block(store: &ParamStore, b: &TransformerBlock, x: &Mat) -> Mat {
        let (a, _) = attention(store, &b.attention, x, x);
        let h: Mat = x.iter().zip(&a).map(|(r, s)| r.iter().zip(s).map(|(u, v)| u + v).collect()).collect();
        let h = layer_norm(store, &b.norm1, &h);
        let f = linear(store, &b.ff_in, &h);
        let f: Mat = f.into_iter().map(|r| r.into_iter().map(gelu).collect()).collect();
        let f = linear(store, &b.ff_out, &f);
        let o: Mat = h.iter().zip(&f).map(|(r, s)| r.iter().zip(s).map(|(u, v)| u + v).collect()).collect();
        layer_norm(store, &b.norm2, &o)
    }

    pub fn to_mat(a: &RealArray) -> Mat {
        (0..a.rows()).map(|i| a.row(i).to_vec()).collect()
    }
}

fn block_fixture(seed: u64) -> (ParamStore, TransformerBlock) {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = BlockShape {
        width: 8,
        heads: 4,
        ff_width: 16,
        eps: 1e-5,
        gelu: crate::numcore::GeluMode::Exact,
        dropout: 0.0,
    };
    let block = TransformerBlock::new(&mut store, "b", shape, &mut rng).unwrap();
    // Non-trivial norms and biases so the oracle exercises every parameter.
    for id in store.ids().collect::<Vec<_>>() {
        let shape = store.get(id).shape().to_vec();
        if shape.len() == 1 {
            let base = if store.name(id).ends_with("gain") { 1.0 } else { 0.0 };
            let noise = RealArray::randn(&shape, 0.2, &mut rng);
            *store.get_mut(id) = RealArray::new(shape, noise.data().iter().map(|v| v + base).collect()).unwrap();
        }
    }
    (store, block)
}

#[test]
fn self_attention_block_matches_loop_oracle() {
    for seed in 0..5 {
        let (store, block) = block_fixture(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = RealArray::randn(&[4, 8], 1.0, &mut rng);
        let expected = oracle::block(&store, &block, &oracle::to_mat(&x));

        let mut g = Graph::new();
        let mut s = Session::eval(&mut g, &store);
        let xv = s.graph.constant(x.clone());
        let out = block.forward(&mut s, xv).unwrap();
        let got = g.value(out.output);
        for i in 0..4 {
            for j in 0..8 {
                assert!((got.get(i, j) - expected[i][j]).abs() < 1e-12);
            }
        }
        for w in out.weights {
            let w = g.value(w);
            for i in 0..w.rows() {
                let sum: f64 = w.row(i).iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
                assert!(w.row(i).iter().all(|p| *p >= 0.0));
            }
        }
    }
}

#[test]
fn single_frame_attention_is_identity_weight() {
    let (store, block) = block_fixture(7);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = RealArray::randn(&[1, 8], 1.0, &mut rng);
    let mut g = Graph::new();
    let mut s = Session::eval(&mut g, &store);
    let xv = s.graph.constant(x.clone());
    let out = block.forward(&mut s, xv).unwrap();
    for w in &out.weights {
        assert_eq!(g.value(*w).data(), &[1.0]);
    }
    // With one frame the attention output is Wo(Wv x + bv) + bo.
    let xm = oracle::to_mat(&x);
    let v = oracle::linear(&store, &block.attention.value, &xm);
    let expected_attn = oracle::linear(&store, &block.attention.output, &v);
    let (attn, _) = oracle::attention(&store, &block.attention, &xm, &xm);
    for j in 0..8 {
        assert!((attn[0][j] - expected_attn[0][j]).abs() < 1e-12);
    }
}

#[test]
fn zero_score_projections_give_uniform_attention() {
    let (mut store, block) = block_fixture(3);
    zero_attention_scores(&mut store, &block.attention);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = RealArray::randn(&[5, 8], 1.0, &mut rng);
    let mut g = Graph::new();
    let mut s = Session::eval(&mut g, &store);
    let xv = s.graph.constant(x);
    let out = block.forward(&mut s, xv).unwrap();
    for w in out.weights {
        assert!(g.value(w).data().iter().all(|p| (p - 0.2).abs() < 1e-15));
    }
}

#[test]
fn audio_encoding_is_deterministic_and_pools_by_mean() {
    let cfg = small_audio_config();
    let build = || {
        let mut store = ParamStore::new();
        let enc = AudioEncoder::new(&mut store, "a", cfg.clone()).unwrap();
        (store, enc)
    };
    let (s1, e1) = build();
    let (s2, e2) = build();
    let w = tone(|t| 200.0 + 40.0 * t, 0.05, 8000);
    let (f1, p1) = e1.encode(&s1, &w).unwrap();
    let (f2, p2) = e2.encode(&s2, &w).unwrap();
    assert_eq!(f1, f2);
    assert!(p1.data().iter().zip(p2.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_eq!(f1.modality, Modality::Speech);

    let single = Waveform::new(w.samples()[..e1.required_len()].to_vec(), 8000).unwrap();
    let (f, p) = e1.encode(&s1, &single).unwrap();
    assert_eq!(f.len(), 1);
    assert_eq!(f.values.row(0), p.data());
}

#[test]
fn rising_and_falling_contours_encode_differently() {
    let mut store = ParamStore::new();
    let enc = AudioEncoder::new(&mut store, "a", EncoderConfig::audio_default()).unwrap();
    let rising = tone(|t| if t < 0.65 { 150.0 } else { 150.0 * (1.0 + (t - 0.65)) }, 1.3, 44_100);
    let falling = tone(|t| if t < 0.65 { 150.0 } else { 150.0 * (1.0 - 0.7 * (t - 0.65)) }, 1.3, 44_100);
    let (_, a) = enc.encode(&store, &rising).unwrap();
    let (_, b) = enc.encode(&store, &falling).unwrap();
    let l2 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    assert!(l2 > 1e-3, "{l2}");
}

#[test]
fn text_encoder_examples() {
    let mut store = ParamStore::new();
    let cfg = EncoderConfig {
        dropout: 0.0,
        ..EncoderConfig::text_default(12)
    };
    let enc = TextEncoder::new(&mut store, "t", cfg).unwrap();

    let one = TokenSequence::new(vec![5], Language::English);
    let (f, p) = enc.encode(&store, &one).unwrap();
    assert_eq!(f.values.row(0), p.data());

    let please = TokenSequence::new(vec![1, 7, 8, 9], Language::English);
    let can_you = TokenSequence::new(vec![2, 7, 8, 9], Language::English);
    let (_, a) = enc.encode(&store, &please).unwrap();
    let (_, b) = enc.encode(&store, &can_you).unwrap();
    assert!(a.max_abs_diff(&b) > 1e-6);
    let (_, a2) = enc.encode(&store, &please).unwrap();
    assert_eq!(a, a2);

    let oov = TokenSequence::new(vec![1, 12], Language::English);
    assert!(matches!(
        enc.encode(&store, &oov),
        Err(EncoderError::OutOfVocabulary { token: 12, size: 12 })
    ));
}

#[test]
fn sinusoidal_positions_follow_formula() {
    let pe = sinusoidal_positions(3, 4);
    assert_eq!(pe.row(0), &[0.0, 1.0, 0.0, 1.0]);
    assert!((pe.get(2, 0) - 2f64.sin()).abs() < 1e-15);
    assert!((pe.get(2, 3) - (2.0 / 100.0f64).cos()).abs() < 1e-15);
}

