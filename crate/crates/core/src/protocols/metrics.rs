use serde::{Deserialize, Serialize};

use super::ProtocolError;

pub const NUM_CLASSES: usize = 3;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn new(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        Self { counts }
    }

    pub fn from_labels(truth: &[usize], pred: &[usize]) -> Result<Self, ProtocolError> {
        if truth.len() != pred.len() {
            return Err(ProtocolError::Metrics(format!(
                "{} labels but {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        let mut cm = Self::default();
        for (&t, &p) in truth.iter().zip(pred) {
            if t >= NUM_CLASSES || p >= NUM_CLASSES {
                return Err(ProtocolError::Metrics(format!("class index out of range: ({t}, {p})")));
            }
            cm.counts[t][p] += 1;
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn nonempty(&self) -> Result<(), ProtocolError> {
        if self.total() == 0 {
            Err(ProtocolError::Metrics("empty confusion matrix".into()))
        } else {
            Ok(())
        }
    }

    pub fn accuracy(&self) -> Result<f64, ProtocolError> {
        self.nonempty()?;
        let trace: u64 = (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum();
        Ok(trace as f64 / self.total() as f64)
    }

    /// Zero-division yields 0 for the affected precision, recall or F1.
    pub fn per_class(&self) -> [ClassMetrics; NUM_CLASSES] {
        std::array::from_fn(|c| {
            let tp = self.counts[c][c];
            let predicted: u64 = (0..NUM_CLASSES).map(|r| self.counts[r][c]).sum();
            let support: u64 = self.counts[c].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
    }

    pub fn macro_f1(&self) -> Result<f64, ProtocolError> {
        self.nonempty()?;
        Ok(self.per_class().iter().map(|m| m.f1).sum::<f64>() / NUM_CLASSES as f64)
    }
}
