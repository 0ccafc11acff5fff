use serde::{Deserialize, Serialize};

use super::{DataError, Result};

pub const NUM_MODALITIES: usize = 8;
pub const SAMPLE_RATE_HZ: u32 = 700;

/// Canonical channel order of every recording and container file.
pub const MODALITY_NAMES: [&str; NUM_MODALITIES] = ["ECG", "EDA", "EMG", "RESP", "TEMP", "ACC_X", "ACC_Y", "ACC_Z"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffectClass {
    Neutral = 0,
    Stress = 1,
    Amusement = 2,
}

impl AffectClass {
    pub const ALL: [AffectClass; 3] = [AffectClass::Neutral, AffectClass::Stress, AffectClass::Amusement];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            AffectClass::Neutral => "neutral",
            AffectClass::Stress => "stress",
            AffectClass::Amusement => "amusement",
        }
    }
}

/// Maps raw per-sample label codes to classes; unmapped codes discard windows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub neutral: u8,
    pub stress: u8,
    pub amusement: u8,
}

impl Default for LabelMap {
    /// Source dataset convention: 1 baseline, 2 stress, 3 amusement.
    fn default() -> Self {
        Self {
            neutral: 1,
            stress: 2,
            amusement: 3,
        }
    }
}

impl LabelMap {
    pub fn class_of(&self, code: u8) -> Option<AffectClass> {
        if code == self.neutral {
            Some(AffectClass::Neutral)
        } else if code == self.stress {
            Some(AffectClass::Stress)
        } else if code == self.amusement {
            Some(AffectClass::Amusement)
        } else {
            None
        }
    }

    pub fn code_of(&self, class: AffectClass) -> u8 {
        match class {
            AffectClass::Neutral => self.neutral,
            AffectClass::Stress => self.stress,
            AffectClass::Amusement => self.amusement,
        }
    }
}

/// One subject's eight synchronized channels plus per-sample raw label codes.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecording {
    subject_id: u16,
    sample_rate_hz: u32,
    modalities: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

impl SubjectRecording {
    pub fn new(subject_id: u16, modalities: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if modalities.len() != NUM_MODALITIES {
            return Err(DataError::InvalidRecording(format!(
                "expected {NUM_MODALITIES} modalities, got {}",
                modalities.len()
            )));
        }
        if let Some((i, m)) = modalities.iter().enumerate().find(|(_, m)| m.len() != labels.len()) {
            return Err(DataError::InvalidRecording(format!(
                "{} has {} samples but there are {} labels",
                MODALITY_NAMES[i],
                m.len(),
                labels.len()
            )));
        }
        if let Some(i) = modalities.iter().position(|m| m.iter().any(|x| !x.is_finite())) {
            return Err(DataError::InvalidRecording(format!(
                "{} contains non-finite samples",
                MODALITY_NAMES[i]
            )));
        }
        Ok(Self {
            subject_id,
            sample_rate_hz: SAMPLE_RATE_HZ,
            modalities,
            labels,
        })
    }

    pub fn subject_id(&self) -> u16 {
        self.subject_id
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn modalities(&self) -> &[Vec<f64>] {
        &self.modalities
    }

    pub fn modality(&self, i: usize) -> &[f64] {
        &self.modalities[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub(crate) fn map_modalities(self, f: impl FnMut(usize, Vec<f64>) -> Vec<f64>) -> Self {
        let mut f = f;
        let modalities = self.modalities.into_iter().enumerate().map(|(i, m)| f(i, m)).collect();
        Self { modalities, ..self }
    }

    /// Number of samples per mapped class (unmapped codes ignored).
    pub fn class_sample_counts(&self, map: &LabelMap) -> [usize; 3] {
        let mut counts = [0; 3];
        for &code in &self.labels {
            if let Some(c) = map.class_of(code) {
                counts[c.index()] += 1;
            }
        }
        counts
    }
}
