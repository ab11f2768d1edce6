use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::vocab::{
    Vocabulary, BENGALI_CLASSIFIER, BENGALI_FILLERS, BENGALI_NOUNS, BENGALI_TAILS, BENGALI_VERBS, ENGLISH_ADVERBS,
    ENGLISH_MARKERS, ENGLISH_NOUNS, ENGLISH_VERBS,
};
use super::DataError;
use crate::encoders::{TokenSequence, Waveform, DEFAULT_SAMPLE_RATE};
use crate::model::SpeechActLabel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Records per class in label order (request, question, order).
    pub counts: [usize; 3],
    pub duration_secs: f64,
    /// Half-width of the uniform duration spread.
    pub duration_jitter_secs: f64,
    pub sample_rate: u32,
    /// Base pitch of each speaker in Hz; the speaker count is its length.
    pub speaker_pitches: Vec<f64>,
    /// Relative per-utterance spread of the base pitch.
    pub pitch_jitter: f64,
    /// Additive noise SNR range in dB; `None` leaves the tone clean.
    pub snr_db: Option<(f64, f64)>,
    /// Relative amplitude of slow random pitch wobble.
    pub contour_jitter: f64,
    /// Range of the class gesture (rise, fall, dip) strength multiplier.
    pub gesture_scale: (f64, f64),
    /// Probability that the English marker is replaced by a wrong one.
    pub marker_noise: f64,
    /// Share of requests whose Bengali tokens are reused by a question.
    pub ambiguity: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            counts: [25, 35, 25],
            duration_secs: 1.3,
            duration_jitter_secs: 0.05,
            sample_rate: DEFAULT_SAMPLE_RATE,
            speaker_pitches: vec![110.0, 130.0, 200.0, 225.0],
            pitch_jitter: 0.05,
            snr_db: Some((10.0, 20.0)),
            contour_jitter: 0.03,
            gesture_scale: (0.3, 1.2),
            marker_noise: 0.2,
            ambiguity: 1.0,
            val_fraction: 0.15,
            test_fraction: 0.15,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    /// No additive noise, no contour wobble, full-strength gestures.
    pub fn noiseless(self) -> Self {
        Self {
            snr_db: None,
            contour_jitter: 0.0,
            gesture_scale: (1.0, 1.0),
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Config(m));
        if self.counts.contains(&0) {
            return bad(format!("class counts must be >= 1, got {:?}", self.counts));
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if !(self.duration_secs > 0.0) || !(0.0..self.duration_secs).contains(&self.duration_jitter_secs) {
            return bad(format!(
                "duration {} s with jitter {} s is not a positive length",
                self.duration_secs, self.duration_jitter_secs
            ));
        }
        if self.speaker_pitches.is_empty() || self.speaker_pitches.iter().any(|p| !(*p > 0.0)) {
            return bad("speaker_pitches must be a nonempty list of positive frequencies".into());
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        let top = self.speaker_pitches.iter().cloned().fold(0.0, f64::max) * (1.0 + self.pitch_jitter) * 1.6 * HARMONICS as f64;
        if top >= nyquist {
            return bad(format!("speaker pitches too high for {} Hz sampling", self.sample_rate));
        }
        for (name, v, hi) in [
            ("pitch_jitter", self.pitch_jitter, 0.5),
            ("contour_jitter", self.contour_jitter, 0.2),
            ("marker_noise", self.marker_noise, 1.0),
            ("ambiguity", self.ambiguity, 1.0),
        ] {
            if !(0.0..=hi).contains(&v) {
                return bad(format!("{name} must lie in [0, {hi}], got {v}"));
            }
        }
        let (g0, g1) = self.gesture_scale;
        if !(g0 >= 0.0 && g0 <= g1 && g1 <= 2.0) {
            return bad(format!("gesture_scale must satisfy 0 <= min <= max <= 2, got {:?}", self.gesture_scale));
        }
        if let Some((lo, hi)) = self.snr_db {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("snr_db range must be finite with min <= max, got {:?}", self.snr_db));
            }
        }
        let (v, t) = (self.val_fraction, self.test_fraction);
        if !(v >= 0.0 && t >= 0.0 && v + t < 1.0) {
            return bad(format!("val_fraction {v} and test_fraction {t} must be >= 0 and leave a training share"));
        }
        Ok(())
    }
}

const HARMONICS: usize = 5;

/// Content words shared between the Bengali sentence and its English rendering.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Content {
    verb: usize,
    noun: usize,
    fillers: Vec<usize>,
    adverb: Option<usize>,
}

impl Content {
    pub(crate) fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let n_fillers = rng.random_range(1..=3);
        let mut pool: Vec<usize> = (0..BENGALI_FILLERS.len()).collect();
        let fillers = (0..n_fillers)
            .map(|_| pool.swap_remove(rng.random_range(0..pool.len())))
            .collect();
        Self {
            verb: rng.random_range(0..ENGLISH_VERBS.len()),
            noun: rng.random_range(0..ENGLISH_NOUNS.len()),
            fillers,
            adverb: rng.random_bool(0.5).then(|| rng.random_range(0..ENGLISH_ADVERBS.len())),
        }
    }
}

/// Which tail the Bengali sentence takes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum BengaliForm {
    /// Request, or a question sharing a request's tokens.
    Toh,
    Interrogative,
    Imperative,
}

impl BengaliForm {
    pub(crate) fn for_label(label: SpeechActLabel) -> Self {
        match label {
            SpeechActLabel::Request => Self::Toh,
            SpeechActLabel::Question => Self::Interrogative,
            SpeechActLabel::Order => Self::Imperative,
        }
    }
}

pub(crate) fn bengali_tokens(content: &Content, form: BengaliForm) -> TokenSequence {
    let tail = match form {
        BengaliForm::Toh => BENGALI_TAILS[0],
        BengaliForm::Interrogative => BENGALI_TAILS[1],
        BengaliForm::Imperative => BENGALI_TAILS[2],
    };
    let mut words: Vec<&str> = content.fillers.iter().map(|&f| BENGALI_FILLERS[f]).collect();
    words.extend([BENGALI_NOUNS[content.noun], BENGALI_CLASSIFIER, BENGALI_VERBS[content.verb], tail]);
    Vocabulary::bengali().encode(&words).expect("generator words are in the vocabulary")
}

pub(crate) fn english_tokens<R: Rng + ?Sized>(content: &Content, label: SpeechActLabel, marker_noise: f64, rng: &mut R) -> TokenSequence {
    let mut marker = label.index();
    if rng.random_bool(marker_noise) {
        marker = (marker + rng.random_range(1..3)) % 3;
    }
    let mut words = vec![ENGLISH_MARKERS[marker], ENGLISH_VERBS[content.verb], "the", ENGLISH_NOUNS[content.noun]];
    if let Some(a) = content.adverb {
        words.push(ENGLISH_ADVERBS[a]);
    }
    Vocabulary::english().encode(&words).expect("generator words are in the vocabulary")
}

/// Relative pitch offset of the class gesture at normalized time `t`.
fn gesture(label: SpeechActLabel, t: f64) -> f64 {
    let tail = ((t - 0.65) / 0.35).max(0.0);
    match label {
        SpeechActLabel::Question => 0.35 * tail,
        SpeechActLabel::Order => -0.25 * tail,
        SpeechActLabel::Request => -0.2 * (-0.5 * ((t - 0.5) / 0.12).powi(2)).exp(),
    }
}

/// Harmonic tone following the class contour, with a syllable envelope of
/// `syllables` bumps, optional noise, peak-normalized to 0.9.
pub(crate) fn synth_audio<R: Rng + ?Sized>(label: SpeechActLabel, syllables: usize, cfg: &GeneratorConfig, rng: &mut R) -> (Waveform, usize) {
    let sr = cfg.sample_rate as f64;
    let speaker = rng.random_range(0..cfg.speaker_pitches.len());
    let f0 = cfg.speaker_pitches[speaker] * (1.0 + cfg.pitch_jitter * rng.random_range(-1.0..=1.0));
    let secs = cfg.duration_secs + cfg.duration_jitter_secs * rng.random_range(-1.0..=1.0);
    let n = (secs * sr).round() as usize;
    let strength = rng.random_range(cfg.gesture_scale.0..=cfg.gesture_scale.1);
    let wobble: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                cfg.contour_jitter * rng.random_range(0.5..=1.0),
                rng.random_range(0.5..=3.0),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let fade = (0.02 * sr).max(1.0);
    let mut phase = 0.0;
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            let jitter: f64 = wobble.iter().map(|(a, f, p)| a * (2.0 * PI * f * t + p).sin()).sum();
            let freq = f0 * (1.0 + strength * gesture(label, t) + jitter);
            phase += 2.0 * PI * freq / sr;
            let tone: f64 = (1..=HARMONICS).map(|h| (h as f64 * phase).sin() / h as f64).sum();
            let syllable = 0.35 + 0.65 * (PI * syllables as f64 * t).sin().powi(2);
            let edge = (i as f64 / fade).min((n - 1 - i) as f64 / fade).min(1.0);
            tone * syllable * edge
        })
        .collect();
    if let Some((lo, hi)) = cfg.snr_db {
        let snr = rng.random_range(lo..=hi);
        let rms = (samples.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
        let noise = Normal::new(0.0, rms / 10f64.powf(snr / 20.0)).expect("finite std");
        for s in &mut samples {
            *s += noise.sample(rng);
        }
    }
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        for s in &mut samples {
            *s *= 0.9 / peak;
        }
    }
    (Waveform::new(samples, cfg.sample_rate).expect("normalized samples"), speaker)
}

/// One synthetic utterance: waveform, Bengali tokens, English tokens.
pub fn synth_utterance(
    label: SpeechActLabel,
    cfg: &GeneratorConfig,
    seed: u64,
) -> Result<(Waveform, TokenSequence, TokenSequence), DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let content = Content::draw(&mut rng);
    let item = synth_item(label, &content, BengaliForm::for_label(label), cfg, &mut rng);
    Ok((item.waveform, item.bengali, item.english))
}

pub(crate) struct SynthItem {
    pub waveform: Waveform,
    pub bengali: TokenSequence,
    pub english: TokenSequence,
    pub speaker: usize,
}

pub(crate) fn synth_item<R: Rng + ?Sized>(
    label: SpeechActLabel,
    content: &Content,
    form: BengaliForm,
    cfg: &GeneratorConfig,
    rng: &mut R,
) -> SynthItem {
    let bengali = bengali_tokens(content, form);
    let english = english_tokens(content, label, cfg.marker_noise, rng);
    let (waveform, speaker) = synth_audio(label, bengali.len(), cfg, rng);
    SynthItem {
        waveform,
        bengali,
        english,
        speaker,
    }
}
