use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::oracle::{audio_oracle, bimodal_oracle, text_oracle};
use super::*;
use crate::encoders::Waveform;
use crate::model::Example;
use crate::checks::oracle_accuracies;

fn sine(freq: f64, amp: f64, n: usize, rate: u32) -> Waveform {
    Waveform::new((0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin()).collect(), rate).unwrap()
}

#[test]
fn default_config_counts_and_splits() {
    let cfg = GeneratorConfig::default();
    let records = generate_records(&cfg).unwrap();
    assert_eq!(records.len(), 85);
    let mut counts = [0; 3];
    let mut per_split: HashMap<(usize, Split), usize> = HashMap::new();
    for (r, w) in &records {
        counts[r.label.index()] += 1;
        *per_split.entry((r.label.index(), r.split)).or_default() += 1;
        assert_eq!(w.sample_rate(), 44_100);
        assert!((5..=7).contains(&r.bengali.len()), "{}", r.id);
        assert!(r.speaker < 4);
    }
    assert_eq!(counts, [25, 35, 25]);
    for (c, n) in counts.iter().enumerate() {
        let (train, val, test) = split_sizes(*n, &cfg);
        assert_eq!(per_split.get(&(c, Split::Train)).copied().unwrap_or(0), train);
        assert_eq!(per_split.get(&(c, Split::Val)).copied().unwrap_or(0), val);
        assert_eq!(per_split.get(&(c, Split::Test)).copied().unwrap_or(0), test);
    }
    assert_eq!(split_sizes(25, &cfg), (17, 4, 4));
    assert_eq!(split_sizes(35, &cfg), (25, 5, 5));
}

#[test]
fn one_record_per_class() {
    let cfg = GeneratorConfig {
        counts: [1, 1, 1],
        ..GeneratorConfig::default()
    };
    let labels: Vec<_> = generate_records(&cfg).unwrap().into_iter().map(|(r, _)| r.label).collect();
    assert_eq!(labels, SpeechActLabel::ALL);
}

#[test]
fn bengali_length_over_1000_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..1000 {
        let content = synth::Content::draw(&mut rng);
        let label = SpeechActLabel::ALL[i % 3];
        let seq = synth::bengali_tokens(&content, synth::BengaliForm::for_label(label));
        assert!((5..=7).contains(&seq.len()), "length {}", seq.len());
    }
}

#[test]
fn synth_is_deterministic() {
    let cfg = GeneratorConfig::default();
    for label in SpeechActLabel::ALL {
        assert_eq!(synth_utterance(label, &cfg, 9).unwrap(), synth_utterance(label, &cfg, 9).unwrap());
    }
    assert_ne!(
        synth_utterance(SpeechActLabel::Order, &cfg, 9).unwrap().0,
        synth_utterance(SpeechActLabel::Order, &cfg, 10).unwrap().0
    );
}

#[test]
fn ambiguous_twins() {
    let cfg = GeneratorConfig {
        marker_noise: 0.0,
        ambiguity: 1.0,
        ..GeneratorConfig::default().noiseless()
    };
    let records: Vec<UtteranceRecord> = generate_records(&cfg).unwrap().into_iter().map(|(r, _)| r).collect();
    let questions: Vec<&UtteranceRecord> = records.iter().filter(|r| r.label == SpeechActLabel::Question).collect();
    for req in records.iter().filter(|r| r.label == SpeechActLabel::Request) {
        let twin = questions
            .iter()
            .find(|q| q.bengali == req.bengali)
            .unwrap_or_else(|| panic!("{} has no question twin", req.id));
        assert_ne!(text_oracle(&twin.english), text_oracle(&req.english));
        assert_eq!(text_oracle(&req.english), Some(SpeechActLabel::Request));
        assert_eq!(text_oracle(&twin.english), Some(SpeechActLabel::Question));
    }
    // Without ambiguity no Bengali sentence is shared across classes.
    let plain = GeneratorConfig { ambiguity: 0.0, ..cfg };
    let records: Vec<UtteranceRecord> = generate_records(&plain).unwrap().into_iter().map(|(r, _)| r).collect();
    for a in &records {
        for b in &records {
            if a.label != b.label {
                assert_ne!(a.bengali, b.bengali);
            }
        }
    }
}

#[test]
fn noiseless_corpus_is_oracle_separable() {
    let cfg = GeneratorConfig {
        marker_noise: 0.0,
        ..GeneratorConfig::default().noiseless()
    };
    for (r, w) in generate_records(&cfg).unwrap() {
        assert_eq!(audio_oracle(&w).0, r.label, "{}", r.id);
        assert_eq!(bimodal_oracle(&w, &r.english), r.label, "{}", r.id);
    }
}

#[test]
fn config_validation() {
    let ok = GeneratorConfig::default();
    assert!(ok.validate().is_ok());
    let bad = [
        GeneratorConfig { counts: [0, 1, 1], ..ok.clone() },
        GeneratorConfig { ambiguity: 1.5, ..ok.clone() },
        GeneratorConfig { marker_noise: -0.1, ..ok.clone() },
        GeneratorConfig { speaker_pitches: vec![], ..ok.clone() },
        GeneratorConfig { snr_db: Some((20.0, 10.0)), ..ok.clone() },
        GeneratorConfig { gesture_scale: (1.0, 0.5), ..ok.clone() },
        GeneratorConfig { sample_rate: 2000, ..ok.clone() },
        GeneratorConfig { val_fraction: 0.5, test_fraction: 0.5, ..ok.clone() },
    ];
    for cfg in bad {
        assert!(matches!(cfg.validate(), Err(DataError::Config(_))), "{cfg:?}");
    }
}

#[test]
fn wav_header_and_round_trip() {
    let w = sine(440.0, 0.8, 4410, 44_100);
    let bytes = encode_wav(&w);
    assert_eq!(bytes.len(), 44 + 2 * 4410);
    assert_eq!(&bytes[0..4], b"RIFF");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 36 + 8820);
    assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 44_100);
    assert_eq!(u32::from_le_bytes(bytes[28..32].try_into().unwrap()), 88_200);
    assert_eq!(u16::from_le_bytes(bytes[32..34].try_into().unwrap()), 2);
    let back = decode_wav(&bytes, Path::new("mem.wav")).unwrap();
    assert_eq!(back.sample_rate(), 44_100);
    let err = w.samples().iter().zip(back.samples()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err <= 1.0 / 32768.0, "{err}");

    let one = Waveform::new(vec![-0.3], 44_100).unwrap();
    let back = decode_wav(&encode_wav(&one), Path::new("one.wav")).unwrap();
    assert!((back.samples()[0] + 0.3).abs() <= 1.0 / 32768.0);
    let full = Waveform::new(vec![1.0, -1.0], 8000).unwrap();
    let back = decode_wav(&encode_wav(&full), Path::new("full.wav")).unwrap();
    assert_eq!(back.samples(), &[32767.0 / 32768.0, -1.0]);
}

#[test]
fn wav_errors_name_the_field() {
    let good = encode_wav(&sine(100.0, 0.5, 100, 8000));
    let field = |bytes: &[u8]| match decode_wav(bytes, Path::new("x.wav")) {
        Err(DataError::Wav { field, .. }) => field,
        other => panic!("expected a format error, got {other:?}"),
    };
    let mut stereo = good.clone();
    stereo[22] = 2;
    assert_eq!(field(&stereo), "NumChannels");
    let mut float = good.clone();
    float[20] = 3;
    assert_eq!(field(&float), "AudioFormat");
    let mut bits = good.clone();
    bits[34] = 8;
    assert_eq!(field(&bits), "BitsPerSample");
    let mut riff = good.clone();
    riff[0] = b'X';
    assert_eq!(field(&riff), "ChunkID");
    let mut wave = good.clone();
    wave[8] = b'X';
    assert_eq!(field(&wave), "Format");
    let mut rate = good.clone();
    rate[28] ^= 1;
    assert_eq!(field(&rate), "ByteRate");
    assert_eq!(field(&good[..60]), "Subchunk2Size");
    assert_eq!(field(&good[..36]), "data chunk");
    assert_eq!(field(&good[..8]), "RIFF header");
}

#[test]
fn wav_skips_unknown_chunks() {
    let good = encode_wav(&sine(100.0, 0.5, 101, 8000));
    let mut with_list = good[..36].to_vec();
    with_list.extend_from_slice(b"LIST");
    with_list.extend_from_slice(&3u32.to_le_bytes());
    with_list.extend_from_slice(&[1, 2, 3, 0]);
    with_list.extend_from_slice(&good[36..]);
    assert_eq!(
        decode_wav(&with_list, Path::new("a")).unwrap(),
        decode_wav(&good, Path::new("b")).unwrap()
    );
}

#[test]
fn dataset_files_are_byte_identical_on_rerun() {
    let cfg = GeneratorConfig {
        counts: [3, 4, 3],
        ..GeneratorConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = generate_dataset(&cfg, a.path()).unwrap();
    let mb = generate_dataset(&cfg, b.path()).unwrap();
    assert_eq!(ma.checksum().unwrap(), mb.checksum().unwrap());
    assert_eq!(
        std::fs::read(a.path().join(MANIFEST_FILE)).unwrap(),
        std::fs::read(b.path().join(MANIFEST_FILE)).unwrap()
    );
    for r in &ma.records {
        assert_eq!(std::fs::read(a.path().join(&r.wav)).unwrap(), std::fs::read(b.path().join(&r.wav)).unwrap());
    }
    let other = generate_dataset(&GeneratorConfig { seed: 1, ..cfg }, b.path()).unwrap();
    assert_ne!(other.checksum().unwrap(), ma.checksum().unwrap());
}

#[test]
fn manifest_round_trip() {
    let cfg = GeneratorConfig {
        counts: [2, 3, 2],
        ..GeneratorConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let written = generate_dataset(&cfg, dir.path()).unwrap();
    let read = DatasetManifest::read(dir.path()).unwrap();
    assert_eq!(read, written);
    assert_eq!(read.class_counts(), [2, 3, 2]);
    let header = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
    assert!(header.starts_with("id\twav\tbengali\tenglish\tlabel\tspeaker\tsplit\n"));
    let train = read.examples(Split::Train).unwrap();
    assert_eq!(train.len(), read.split_records(Split::Train).count());
    for ex in &train {
        assert_eq!(ex.waveform.sample_rate(), 44_100);
    }
}

#[test]
fn manifest_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let header = "id\twav\tbengali\tenglish\tlabel\tspeaker\tsplit\n";
    std::fs::write(&path, format!("{header}a\twav/a.wav\tboi ta poro ki\tplease read the book\trequest\t0\ttrain\nb\tx\n")).unwrap();
    match DatasetManifest::read(&path) {
        Err(DataError::Manifest { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    std::fs::write(&path, format!("{header}a\twav/a.wav\tboi ta poro ki\tplease read the book\tshout\t0\ttrain\n")).unwrap();
    assert!(matches!(DatasetManifest::read(&path), Err(DataError::Manifest { line: 2, .. })));
    std::fs::write(&path, "id\twav\n").unwrap();
    assert!(matches!(DatasetManifest::read(&path), Err(DataError::Manifest { line: 1, .. })));
    assert!(matches!(DatasetManifest::read(&dir.path().join("nope.tsv")), Err(DataError::Io { .. })));
}

#[test]
fn identity_augmentation_is_exact() {
    let cfg = AugmentationConfig::identity();
    let (w, bn, en) = synth_utterance(SpeechActLabel::Question, &GeneratorConfig::default(), 4).unwrap();
    for seed in 0..5 {
        assert_eq!(augment_audio(&w, &cfg, seed).unwrap(), w);
        assert_eq!(augment_english(&en, &cfg, seed).unwrap(), en);
    }
    assert!(matches!(
        augment_english(&bn, &cfg, 0),
        Err(DataError::Modality { expected: Language::English, found: Language::Bengali })
    ));
}

#[test]
fn augmentation_arithmetic() {
    let w = sine(441.0, 0.5, 44_100, 44_100);
    let gain = AugmentationConfig {
        gain_db: (6.0, 6.0),
        ..AugmentationConfig::identity()
    };
    let g = augment_audio(&w, &gain, 0).unwrap();
    let factor = 10f64.powf(0.3);
    for (a, b) in w.samples().iter().zip(g.samples()) {
        assert!((b - a * factor).abs() < 1e-12);
    }
    // +12 dB overshoots full scale and is scaled back to a unit peak.
    let loud = augment_audio(&w, &AugmentationConfig { gain_db: (12.0, 12.0), ..gain.clone() }, 0).unwrap();
    let peak = loud.samples().iter().fold(0.0f64, |m, s| m.max(s.abs()));
    assert!((peak - 1.0).abs() < 1e-12);

    let shift = AugmentationConfig {
        shift_ms: (100.0, 100.0),
        ..AugmentationConfig::identity()
    };
    let s = augment_audio(&w, &shift, 0).unwrap();
    assert_eq!(s.len(), w.len());
    assert!(s.samples()[..4410].iter().all(|&v| v == 0.0));
    assert_eq!(s.samples()[4410..], w.samples()[..w.len() - 4410]);

    let back = AugmentationConfig {
        shift_ms: (-100.0, -100.0),
        ..AugmentationConfig::identity()
    };
    let s = augment_audio(&w, &back, 0).unwrap();
    assert!(s.samples()[w.len() - 4410..].iter().all(|&v| v == 0.0));

    let bad = AugmentationConfig {
        gain_db: (3.0, -3.0),
        ..AugmentationConfig::identity()
    };
    assert!(matches!(augment_audio(&w, &bad, 0), Err(DataError::Config(_))));
}

#[test]
fn english_augmentation_keeps_markers() {
    let cfg = AugmentationConfig {
        synonym_prob: 0.9,
        ..AugmentationConfig::default()
    };
    let vocab = Vocabulary::english();
    let mut changed = 0;
    for seed in 0..1000u64 {
        let label = SpeechActLabel::ALL[seed as usize % 3];
        let (_, _, en) = synth_utterance(label, &GeneratorConfig::default(), seed).unwrap();
        let out = augment_english(&en, &cfg, seed).unwrap();
        assert_eq!(out.len(), en.len());
        assert_eq!(out.tokens[0], en.tokens[0]);
        assert!(marker_label(&vocab, out.tokens[0]).is_some());
        for &t in &out.tokens[1..] {
            assert!(marker_label(&vocab, t).is_none());
        }
        changed += (out != en) as usize;
    }
    assert!(changed > 100, "synonym swaps should happen ({changed})");
}

#[test]
fn augmented_examples_keep_labels_and_rate() {
    let cfg = GeneratorConfig {
        counts: [2, 2, 2],
        ..GeneratorConfig::default()
    };
    let examples: Vec<Example> = generate_records(&cfg)
        .unwrap()
        .into_iter()
        .map(|(r, w)| Example {
            waveform: w,
            english: r.english,
            label: r.label,
        })
        .collect();
    let aug = AugmentationConfig {
        copies: 2,
        ..AugmentationConfig::default()
    };
    let out = augment_examples(&examples, &aug, 3).unwrap();
    assert_eq!(out.len(), 18);
    assert_eq!(out[..6], examples[..]);
    for (i, ex) in out.iter().enumerate() {
        let orig = &examples[i % 6];
        assert_eq!(ex.label, orig.label);
        assert_eq!(ex.waveform.sample_rate(), orig.waveform.sample_rate());
        assert_eq!(ex.waveform.len(), orig.waveform.len());
        assert_eq!(ex.english.tokens[0], orig.english.tokens[0]);
    }
    assert_eq!(out, augment_examples(&examples, &aug, 3).unwrap());
}

#[test]
fn oracle_accuracy_ordering() {
    let cfg = GeneratorConfig {
        marker_noise: 0.2,
        ..GeneratorConfig::default()
    };
    let [audio, text, both] = oracle_accuracies(&cfg, 150, 4).unwrap();
    assert!(both > audio && both > text, "audio {audio} text {text} bimodal {both}");
    let clean = GeneratorConfig {
        marker_noise: 0.0,
        ..GeneratorConfig::default().noiseless()
    };
    assert_eq!(oracle_accuracies(&clean, 60, 5).unwrap(), [1.0; 3]);
}
