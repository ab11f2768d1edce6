//! RIFF/WAVE PCM16 mono reader and writer.

use std::path::Path;

use super::DataError;
use crate::encoders::Waveform;

const HEADER_LEN: usize = 44;

fn format_error(path: &Path, field: &'static str, detail: impl Into<String>) -> DataError {
    DataError::Wav {
        path: path.display().to_string(),
        field,
        detail: detail.into(),
    }
}

/// 16-bit little-endian PCM, rounding `sample · 32768` and clamping to
/// `[-32768, 32767]`.
pub fn encode_wav(w: &Waveform) -> Vec<u8> {
    let data_len = 2 * w.len() as u32;
    let rate = w.sample_rate();
    let mut out = Vec::with_capacity(HEADER_LEN + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in w.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav(w: &Waveform, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, encode_wav(w)).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_wav(path: &Path) -> Result<Waveform, DataError> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_wav(&bytes, path)
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Parses a WAV image; `path` only labels errors.
pub fn decode_wav(bytes: &[u8], path: &Path) -> Result<Waveform, DataError> {
    if bytes.len() < 12 {
        return Err(format_error(path, "RIFF header", format!("file is only {} bytes", bytes.len())));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(format_error(path, "ChunkID", format!("expected \"RIFF\", found {:?}", &bytes[0..4])));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(format_error(path, "Format", format!("expected \"WAVE\", found {:?}", &bytes[8..12])));
    }
    let mut fmt: Option<(u16, u16, u32, u32, u16, u16)> = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = u32_at(bytes, at + 4) as usize;
        let body = at + 8;
        let end = body.checked_add(size).filter(|&e| e <= bytes.len());
        match id {
            b"fmt " => {
                if size < 16 || end.is_none() {
                    return Err(format_error(path, "Subchunk1Size", format!("fmt chunk of {size} bytes")));
                }
                fmt = Some((
                    u16_at(bytes, body),
                    u16_at(bytes, body + 2),
                    u32_at(bytes, body + 4),
                    u32_at(bytes, body + 8),
                    u16_at(bytes, body + 12),
                    u16_at(bytes, body + 14),
                ));
            }
            b"data" => {
                let (format, channels, rate, byte_rate, align, bits) =
                    fmt.ok_or_else(|| format_error(path, "fmt chunk", "data chunk precedes fmt chunk"))?;
                if format != 1 {
                    return Err(format_error(path, "AudioFormat", format!("{format} (only PCM = 1 is supported)")));
                }
                if channels != 1 {
                    return Err(format_error(path, "NumChannels", format!("{channels} (only mono is supported)")));
                }
                if bits != 16 {
                    return Err(format_error(path, "BitsPerSample", format!("{bits} (only 16 is supported)")));
                }
                if rate == 0 {
                    return Err(format_error(path, "SampleRate", "0"));
                }
                if align != 2 {
                    return Err(format_error(path, "BlockAlign", format!("{align}, expected 2")));
                }
                if byte_rate != rate * 2 {
                    return Err(format_error(path, "ByteRate", format!("{byte_rate}, expected {}", rate * 2)));
                }
                let end = end.ok_or_else(|| {
                    format_error(path, "Subchunk2Size", format!("{size} bytes declared, {} available", bytes.len() - body))
                })?;
                if !size.is_multiple_of(2) {
                    return Err(format_error(path, "Subchunk2Size", format!("{size} is not a whole number of samples")));
                }
                let samples = bytes[body..end]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                    .collect();
                return Waveform::new(samples, rate).map_err(|e| format_error(path, "data", e.to_string()));
            }
            _ => {}
        }
        // Chunks are word-aligned.
        at = body + size + (size & 1);
    }
    Err(format_error(path, "data chunk", "missing"))
}
