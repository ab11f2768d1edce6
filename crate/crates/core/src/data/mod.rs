//! Synthetic speech-act corpus: generation, augmentation, WAV and manifest I/O.

mod augment;
mod manifest;
pub mod oracle;
mod synth;
mod vocab;
mod wav;

#[cfg(test)]
mod tests;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use augment::{augment_audio, augment_english, augment_examples, AugmentationConfig};
pub use manifest::{DatasetManifest, MANIFEST_FILE};
pub use synth::{synth_utterance, GeneratorConfig};
pub use vocab::{
    marker_label, Vocabulary, BENGALI_CLASSIFIER, BENGALI_FILLERS, BENGALI_NOUNS, BENGALI_TAILS, BENGALI_VERBS,
    ENGLISH_ADVERBS, ENGLISH_MARKERS, ENGLISH_NOUNS, ENGLISH_SYNONYMS, ENGLISH_VERBS,
};
pub use wav::{decode_wav, encode_wav, read_wav, write_wav};

use crate::encoders::{EncoderError, Language, TokenSequence};
use crate::model::SpeechActLabel;
use crate::seed::derive;
use synth::{synth_item, BengaliForm, Content};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad WAV field {field}: {detail}")]
    Wav {
        path: String,
        field: &'static str,
        detail: String,
    },
    #[error("{path}:{line}: {msg}")]
    Manifest { path: String, line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("expected a {expected:?} token sequence, got {found:?}")]
    Modality { expected: Language, found: Language },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown split {s:?} (expected train, val or test)"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceRecord {
    pub id: String,
    /// Relative to the manifest directory.
    pub wav: PathBuf,
    pub bengali: TokenSequence,
    pub english: TokenSequence,
    pub label: SpeechActLabel,
    pub speaker: usize,
    pub split: Split,
}

const CONTENT_STREAM: u64 = 0xC0;
const SPLIT_STREAM: u64 = 0x5B;

/// Per-class split sizes `(train, val, test)`; val and test get
/// `round(fraction · n)` each and training keeps the rest.
pub fn split_sizes(n: usize, cfg: &GeneratorConfig) -> (usize, usize, usize) {
    let val = (cfg.val_fraction * n as f64).round() as usize;
    let test = ((cfg.test_fraction * n as f64).round() as usize).min(n - val);
    (n - val - test, val, test)
}

/// Number of requests whose Bengali sentence is copied by a question.
pub fn twin_count(cfg: &GeneratorConfig) -> usize {
    let pairs = cfg.counts[0].min(cfg.counts[1]);
    (cfg.ambiguity * pairs as f64).round() as usize
}

/// Generates every record and waveform without touching the filesystem.
pub fn generate_records(cfg: &GeneratorConfig) -> Result<Vec<(UtteranceRecord, crate::encoders::Waveform)>, DataError> {
    cfg.validate()?;
    let twins = twin_count(cfg);
    let mut out = Vec::with_capacity(cfg.counts.iter().sum());
    for label in SpeechActLabel::ALL {
        let class = label.index();
        let n = cfg.counts[class];
        let mut splits = {
            let (train, val, test) = split_sizes(n, cfg);
            let mut s: Vec<Split> = [(Split::Train, train), (Split::Val, val), (Split::Test, test)]
                .into_iter()
                .flat_map(|(s, k)| std::iter::repeat_n(s, k))
                .collect();
            s.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(cfg.seed, &[SPLIT_STREAM, class as u64])));
            s
        };
        for (j, split) in splits.drain(..).enumerate() {
            let (content_class, form) = match label {
                SpeechActLabel::Question if j < twins => (SpeechActLabel::Request.index(), BengaliForm::Toh),
                _ => (class, BengaliForm::for_label(label)),
            };
            let mut content_rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, &[CONTENT_STREAM, content_class as u64, j as u64]));
            let content = Content::draw(&mut content_rng);
            let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, &[class as u64, j as u64]));
            let item = synth_item(label, &content, form, cfg, &mut rng);
            let id = format!("{}-{j:03}", label.name());
            out.push((
                UtteranceRecord {
                    wav: Path::new("wav").join(format!("{id}.wav")),
                    id,
                    bengali: item.bengali,
                    english: item.english,
                    label,
                    speaker: item.speaker,
                    split,
                },
                item.waveform,
            ));
        }
    }
    Ok(out)
}

/// Writes `out_dir/wav/*.wav` and `out_dir/manifest.tsv`.
pub fn generate_dataset(cfg: &GeneratorConfig, out_dir: &Path) -> Result<DatasetManifest, DataError> {
    let generated = generate_records(cfg)?;
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| DataError::Io { path, source }
    };
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(io(&wav_dir))?;
    let mut records = Vec::with_capacity(generated.len());
    for (record, waveform) in generated {
        write_wav(&waveform, &out_dir.join(&record.wav))?;
        records.push(record);
    }
    let manifest = DatasetManifest {
        dir: out_dir.to_path_buf(),
        records,
    };
    manifest.write()?;
    Ok(manifest)
}
