use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{read_wav, DataError, Split, UtteranceRecord, Vocabulary};
use crate::model::{Example, SpeechActLabel};

pub const MANIFEST_FILE: &str = "manifest.tsv";
const HEADER: [&str; 7] = ["id", "wav", "bengali", "english", "label", "speaker", "split"];

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    /// Directory holding the manifest; record paths are relative to it.
    pub dir: PathBuf,
    pub records: Vec<UtteranceRecord>,
}

impl DatasetManifest {
    pub fn path(&self) -> PathBuf {
        self.dir.join(MANIFEST_FILE)
    }

    pub fn to_tsv(&self) -> String {
        let (bn, en) = (Vocabulary::bengali(), Vocabulary::english());
        let mut out = HEADER.join("\t");
        out.push('\n');
        for r in &self.records {
            let wav = r.wav.to_string_lossy().replace('\\', "/");
            let fields = [
                r.id.clone(),
                wav,
                bn.decode(&r.bengali),
                en.decode(&r.english),
                r.label.name().to_string(),
                r.speaker.to_string(),
                r.split.name().to_string(),
            ];
            out.push_str(&fields.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self) -> Result<(), DataError> {
        let path = self.path();
        std::fs::write(&path, self.to_tsv()).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Reads `path`, or `path/manifest.tsv` when `path` is a directory.
    pub fn read(path: &Path) -> Result<Self, DataError> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|source| DataError::Io {
            path: file.display().to_string(),
            source,
        })?;
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &file, dir)
    }

    fn parse(text: &str, file: &Path, dir: PathBuf) -> Result<Self, DataError> {
        let err = |line: usize, msg: String| DataError::Manifest {
            path: file.display().to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, h)) if h.split('\t').eq(HEADER) => {}
            _ => return Err(err(1, format!("expected header {:?}", HEADER.join("\t")))),
        }
        let (bn, en) = (Vocabulary::bengali(), Vocabulary::english());
        let mut records = Vec::new();
        for (line, text) in lines {
            if text.is_empty() {
                continue;
            }
            let f: Vec<&str> = text.split('\t').collect();
            if f.len() != HEADER.len() {
                return Err(err(line, format!("expected {} fields, found {}", HEADER.len(), f.len())));
            }
            let tokens = |v: &Vocabulary, s: &str| {
                let words: Vec<&str> = s.split(' ').filter(|w| !w.is_empty()).collect();
                v.encode(&words).map_err(|e| err(line, e.to_string()))
            };
            records.push(UtteranceRecord {
                id: f[0].to_string(),
                wav: PathBuf::from(f[1]),
                bengali: tokens(&bn, f[2])?,
                english: tokens(&en, f[3])?,
                label: f[4].parse::<SpeechActLabel>().map_err(|e| err(line, e.to_string()))?,
                speaker: f[5].parse().map_err(|_| err(line, format!("speaker {:?} is not an integer", f[5])))?,
                split: f[6].parse::<Split>().map_err(|e| err(line, e))?,
            });
        }
        Ok(Self { dir, records })
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for r in &self.records {
            c[r.label.index()] += 1;
        }
        c
    }

    pub fn split_records(&self, split: Split) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Loads the waveforms of one split as model examples.
    pub fn examples(&self, split: Split) -> Result<Vec<Example>, DataError> {
        self.split_records(split)
            .map(|r| {
                Ok(Example {
                    waveform: read_wav(&self.dir.join(&r.wav))?,
                    english: r.english.clone(),
                    label: r.label,
                })
            })
            .collect()
    }

    /// SHA-256 over the manifest text followed by every WAV file in record order.
    pub fn checksum(&self) -> Result<String, DataError> {
        let mut h = Sha256::new();
        h.update(self.to_tsv().as_bytes());
        for r in &self.records {
            let path = self.dir.join(&r.wav);
            let bytes = std::fs::read(&path).map_err(|source| DataError::Io {
                path: path.display().to_string(),
                source,
            })?;
            h.update(&bytes);
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}
