//! Rule-based reference classifiers used to certify the synthetic task.

use super::vocab::{marker_label, Vocabulary};
use crate::encoders::{Language, TokenSequence, Waveform};
use crate::model::SpeechActLabel;

const DECIMATE: usize = 4;
const FRAME_SECS: f64 = 0.03;
const HOP_SECS: f64 = 0.01;
const MIN_F0: f64 = 70.0;
const MAX_F0: f64 = 450.0;

/// Window placement as fractions of the utterance.
const HEAD: (f64, f64) = (0.05, 0.25);
const TAIL: (f64, f64) = (0.85, 0.97);

/// Log-ratio thresholds on the terminal pitch movement.
pub const RISE_THRESHOLD: f64 = 0.04;
pub const FALL_THRESHOLD: f64 = -0.03;
/// Audio evidence closer than this to a threshold defers to the marker.
pub const CONFIDENT_MARGIN: f64 = 0.02;

/// Autocorrelation pitch of one frame (Hz), or `None` when unvoiced.
fn frame_pitch(x: &[f64], rate: f64) -> Option<f64> {
    let min_lag = (rate / MAX_F0).floor() as usize;
    let max_lag = ((rate / MIN_F0).ceil() as usize).min(x.len() / 2);
    if min_lag < 1 || max_lag <= min_lag + 1 {
        return None;
    }
    let energy: f64 = x.iter().map(|v| v * v).sum();
    if energy <= 0.0 {
        return None;
    }
    let r: Vec<f64> = (0..=max_lag + 1)
        .map(|lag| {
            let n = x.len() - lag;
            let s: f64 = x[..n].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum();
            s / energy * x.len() as f64 / n as f64
        })
        .collect();
    let peak = (min_lag..=max_lag).map(|l| r[l]).fold(f64::NEG_INFINITY, f64::max);
    if peak < 0.5 {
        return None;
    }
    // The shortest lag that reaches most of the peak avoids octave-down errors.
    let lag = (min_lag..=max_lag).find(|&l| r[l] >= 0.9 * peak && r[l] >= r[l - 1] && r[l] >= r[l + 1])?;
    let (a, b, c) = (r[lag - 1], r[lag], r[lag + 1]);
    let denom = a - 2.0 * b + c;
    let offset = if denom.abs() > 1e-12 { 0.5 * (a - c) / denom } else { 0.0 };
    Some(rate / (lag as f64 + offset.clamp(-0.5, 0.5)))
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn window_pitch(x: &[f64], rate: f64, (from, to): (f64, f64)) -> Option<f64> {
    let frame = (FRAME_SECS * rate).round() as usize;
    let hop = (HOP_SECS * rate).round() as usize;
    let (start, end) = ((from * x.len() as f64) as usize, (to * x.len() as f64) as usize);
    let mut pitches = Vec::new();
    let mut at = start;
    while at + frame <= end.min(x.len()) {
        pitches.extend(frame_pitch(&x[at..at + frame], rate));
        at += hop;
    }
    median(pitches)
}

/// `ln(tail pitch / head pitch)`; `None` if either window is unvoiced.
pub fn terminal_pitch_movement(w: &Waveform) -> Option<f64> {
    let x: Vec<f64> = w
        .samples()
        .chunks_exact(DECIMATE)
        .map(|c| c.iter().sum::<f64>() / DECIMATE as f64)
        .collect();
    let rate = w.sample_rate() as f64 / DECIMATE as f64;
    Some((window_pitch(&x, rate, TAIL)? / window_pitch(&x, rate, HEAD)?).ln())
}

/// Label from the terminal pitch movement and the distance to the nearest
/// decision threshold.
pub fn audio_oracle(w: &Waveform) -> (SpeechActLabel, f64) {
    let Some(m) = terminal_pitch_movement(w) else {
        return (SpeechActLabel::Request, 0.0);
    };
    let label = if m > RISE_THRESHOLD {
        SpeechActLabel::Question
    } else if m < FALL_THRESHOLD {
        SpeechActLabel::Order
    } else {
        SpeechActLabel::Request
    };
    let margin = (m - RISE_THRESHOLD).abs().min((m - FALL_THRESHOLD).abs());
    (label, margin)
}

/// Label of the first English marker token, if any.
pub fn text_oracle(english: &TokenSequence) -> Option<SpeechActLabel> {
    if english.language != Language::English {
        return None;
    }
    let vocab = Vocabulary::english();
    english
        .tokens
        .iter()
        .find_map(|&t| marker_label(&vocab, t))
        .and_then(SpeechActLabel::from_index)
}

/// Audio when its margin is confident, otherwise the marker.
pub fn bimodal_oracle(w: &Waveform, english: &TokenSequence) -> SpeechActLabel {
    let (audio, margin) = audio_oracle(w);
    match text_oracle(english) {
        Some(text) if margin < CONFIDENT_MARGIN => text,
        _ => audio,
    }
}
