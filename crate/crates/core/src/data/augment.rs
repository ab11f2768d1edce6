use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, ENGLISH_MARKERS, ENGLISH_SYNONYMS};
use super::DataError;
use crate::encoders::{Language, TokenSequence, Waveform};
use crate::model::Example;
use crate::seed::derive;

/// Time-domain audio perturbations and English synonym swaps. Bengali text
/// has no augmentation at all.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentationConfig {
    /// Shift range in milliseconds; positive delays the signal.
    pub shift_ms: (f64, f64),
    pub gain_db: (f64, f64),
    /// `None` adds no noise.
    pub snr_db: Option<(f64, f64)>,
    pub synonym_prob: f64,
    /// Augmented copies added per training record.
    pub copies: usize,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            shift_ms: (-50.0, 50.0),
            gain_db: (-6.0, 3.0),
            snr_db: Some((15.0, 30.0)),
            synonym_prob: 0.3,
            copies: 1,
        }
    }
}

impl AugmentationConfig {
    pub fn identity() -> Self {
        Self {
            shift_ms: (0.0, 0.0),
            gain_db: (0.0, 0.0),
            snr_db: None,
            synonym_prob: 0.0,
            copies: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let ranges = [("shift_ms", Some(self.shift_ms)), ("gain_db", Some(self.gain_db)), ("snr_db", self.snr_db)];
        for (name, r) in ranges {
            if let Some((lo, hi)) = r {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return Err(DataError::Config(format!("{name} range ({lo}, {hi}) must be finite with min <= max")));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.synonym_prob) {
            return Err(DataError::Config(format!("synonym_prob must lie in [0, 1], got {}", self.synonym_prob)));
        }
        Ok(())
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Zero-padded shift, linear gain, Gaussian noise at a sampled SNR, then
/// scaled down if any sample leaves `[-1, 1]`. Length and rate are unchanged.
pub fn augment_audio(w: &Waveform, cfg: &AugmentationConfig, seed: u64) -> Result<Waveform, DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = w.len();
    let shift = (draw(&mut rng, cfg.shift_ms) * 1e-3 * w.sample_rate() as f64).round() as i64;
    let gain = 10f64.powf(draw(&mut rng, cfg.gain_db) / 20.0);
    let src = w.samples();
    let mut out: Vec<f64> = (0..n as i64)
        .map(|i| {
            let j = i - shift;
            if (0..n as i64).contains(&j) {
                src[j as usize] * gain
            } else {
                0.0
            }
        })
        .collect();
    if let Some(range) = cfg.snr_db {
        let snr = draw(&mut rng, range);
        let rms = (out.iter().map(|s| s * s).sum::<f64>() / n.max(1) as f64).sqrt();
        if rms > 0.0 {
            let noise = Normal::new(0.0, rms / 10f64.powf(snr / 20.0)).expect("finite std");
            for s in &mut out {
                *s += noise.sample(&mut rng);
            }
        }
    }
    Ok(Waveform::normalized(out, w.sample_rate())?)
}

/// Swaps words with their table synonym (in either direction) with
/// probability `synonym_prob` each. Marker tokens are never candidates.
pub fn augment_english(t: &TokenSequence, cfg: &AugmentationConfig, seed: u64) -> Result<TokenSequence, DataError> {
    if t.language != Language::English {
        return Err(DataError::Modality {
            expected: Language::English,
            found: t.language,
        });
    }
    cfg.validate()?;
    let vocab = Vocabulary::english();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tokens = t
        .tokens
        .iter()
        .map(|&tok| {
            let Some(word) = vocab.word(tok) else { return tok };
            if ENGLISH_MARKERS.contains(&word) {
                return tok;
            }
            let partner = ENGLISH_SYNONYMS.iter().find_map(|&(a, b)| match word {
                w if w == a => Some(b),
                w if w == b => Some(a),
                _ => None,
            });
            match partner {
                Some(p) if rng.random_bool(cfg.synonym_prob) => vocab.id(p).expect("synonyms are in the vocabulary"),
                _ => tok,
            }
        })
        .collect();
    Ok(TokenSequence::new(tokens, Language::English))
}

/// The originals followed by `copies` augmented versions of each, seeded per
/// `(record, copy)`.
pub fn augment_examples(examples: &[Example], cfg: &AugmentationConfig, seed: u64) -> Result<Vec<Example>, DataError> {
    cfg.validate()?;
    let mut out = examples.to_vec();
    for copy in 0..cfg.copies {
        for (i, ex) in examples.iter().enumerate() {
            let s = derive(seed, &[i as u64, copy as u64]);
            out.push(Example {
                waveform: augment_audio(&ex.waveform, cfg, derive(s, &[0]))?,
                english: augment_english(&ex.english, cfg, derive(s, &[1]))?,
                label: ex.label,
            });
        }
    }
    Ok(out)
}
