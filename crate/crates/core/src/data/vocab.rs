//! Fixed word lists. Bengali is romanized; ids are positions in the list.

use crate::encoders::{Language, TokenSequence};

use super::DataError;

/// English marker words in label order: request, question, order.
pub const ENGLISH_MARKERS: [&str; 3] = ["please", "can-you", "must"];

pub const ENGLISH_VERBS: [&str; 10] = [
    "open", "close", "bring", "send", "clean", "check", "call", "fix", "carry", "read",
];
pub const ENGLISH_NOUNS: [&str; 10] = [
    "window", "door", "letter", "book", "car", "phone", "table", "bag", "report", "light",
];
pub const ENGLISH_ADVERBS: [&str; 4] = ["quickly", "today", "again", "carefully"];

/// Meaning-preserving substitutions; markers never appear here.
pub const ENGLISH_SYNONYMS: [(&str, &str); 10] = [
    ("close", "shut"),
    ("bring", "fetch"),
    ("clean", "tidy"),
    ("check", "inspect"),
    ("fix", "repair"),
    ("carry", "take"),
    ("car", "vehicle"),
    ("bag", "sack"),
    ("quickly", "fast"),
    ("carefully", "gently"),
];

pub const BENGALI_VERBS: [&str; 10] = [
    "khulo", "bondho-koro", "niye-esho", "pathao", "porishkar-koro", "dekho", "dako", "thik-koro", "bohon-koro", "poro",
];
pub const BENGALI_NOUNS: [&str; 10] = [
    "janala", "dorja", "chithi", "boi", "gari", "phon", "tebil", "byag", "riport", "alo",
];
pub const BENGALI_FILLERS: [&str; 6] = ["ektu", "amake", "ekhon", "aj", "abar", "taratari"];
pub const BENGALI_CLASSIFIER: &str = "ta";
/// Sentence tails. Request and its question twin share "toh"; the other
/// questions end in the particle "ki"; orders end in "ekhuni".
pub const BENGALI_TAILS: [&str; 3] = ["toh", "ki", "ekhuni"];

#[derive(Debug)]
pub struct Vocabulary {
    pub language: Language,
    words: Vec<&'static str>,
}

impl Vocabulary {
    pub fn english() -> Self {
        let mut words: Vec<&'static str> = ENGLISH_MARKERS.to_vec();
        words.push("the");
        words.extend(ENGLISH_VERBS);
        words.extend(ENGLISH_NOUNS);
        words.extend(ENGLISH_ADVERBS);
        words.extend(ENGLISH_SYNONYMS.iter().map(|(_, b)| *b));
        Self {
            language: Language::English,
            words,
        }
    }

    pub fn bengali() -> Self {
        let mut words: Vec<&'static str> = BENGALI_VERBS.to_vec();
        words.extend(BENGALI_NOUNS);
        words.extend(BENGALI_FILLERS);
        words.push(BENGALI_CLASSIFIER);
        words.extend(BENGALI_TAILS);
        Self {
            language: Language::Bengali,
            words,
        }
    }

    pub fn for_language(language: Language) -> Self {
        match language {
            Language::English => Self::english(),
            Language::Bengali => Self::bengali(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.words.iter().position(|w| *w == word)
    }

    pub fn word(&self, id: usize) -> Option<&'static str> {
        self.words.get(id).copied()
    }

    pub fn encode(&self, words: &[&str]) -> Result<TokenSequence, DataError> {
        let tokens = words
            .iter()
            .map(|w| {
                self.id(w)
                    .ok_or_else(|| DataError::Config(format!("word {w:?} is not in the {:?} vocabulary", self.language)))
            })
            .collect::<Result<_, _>>()?;
        Ok(TokenSequence::new(tokens, self.language))
    }

    /// Space-separated words; unknown ids render as `<id>`.
    pub fn decode(&self, seq: &TokenSequence) -> String {
        seq.tokens
            .iter()
            .map(|&t| self.word(t).map(str::to_string).unwrap_or_else(|| format!("<{t}>")))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Label index of an English marker id, if it is one.
pub fn marker_label(vocab: &Vocabulary, token: usize) -> Option<usize> {
    vocab.word(token).and_then(|w| ENGLISH_MARKERS.iter().position(|m| *m == w))
}
