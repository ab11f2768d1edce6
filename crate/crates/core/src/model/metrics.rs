use serde::{Deserialize, Serialize};

use super::{Example, Model, ModelError, SpeechActLabel, NUM_CLASSES};

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// `counts[actual][predicted]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (SpeechActLabel, SpeechActLabel)>) -> Self {
        let mut m = Self::default();
        for (actual, predicted) in pairs {
            m.counts[actual.index()][predicted.index()] += 1;
        }
        m
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn metrics(&self) -> Metrics {
        let per_class = SpeechActLabel::ALL.map(|label| {
            let c = label.index();
            let tp = self.counts[c][c];
            let predicted: usize = (0..NUM_CLASSES).map(|a| self.counts[a][c]).sum();
            let actual: usize = self.counts[c].iter().sum();
            let ratio = |num: usize, den: usize| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
            let (precision, precision_undefined) = ratio(tp, predicted);
            let (recall, recall_undefined) = ratio(tp, actual);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                label,
                precision,
                recall,
                f1,
                precision_undefined,
                recall_undefined,
            }
        });
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / NUM_CLASSES as f64;
        let total = self.total();
        let correct: usize = (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum();
        Metrics {
            macro_precision: mean(|m| m.precision),
            macro_recall: mean(|m| m.recall),
            macro_f1: mean(|m| m.f1),
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            per_class,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: SpeechActLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// No record was predicted as this class; precision reported as 0.
    pub precision_undefined: bool,
    /// No record of this class exists; recall reported as 0.
    pub recall_undefined: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub predictions: Vec<SpeechActLabel>,
}

/// Argmax predictions of the variant's prediction head over `examples`.
pub fn evaluate(model: &Model, examples: &[Example]) -> Result<Evaluation, ModelError> {
    if examples.is_empty() {
        return Err(ModelError::EmptySplit("evaluation"));
    }
    let predictions = examples
        .iter()
        .map(|ex| {
            let p = model.predict(&ex.waveform, &ex.english)?;
            Ok(SpeechActLabel::from_index(argmax(&p)).expect("three classes"))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let confusion = ConfusionMatrix::from_pairs(examples.iter().map(|e| e.label).zip(predictions.iter().copied()));
    Ok(Evaluation {
        metrics: confusion.metrics(),
        confusion,
        predictions,
    })
}
