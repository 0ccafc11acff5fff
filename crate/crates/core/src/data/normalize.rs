use serde::{Deserialize, Serialize};

use super::recording::{LabelMap, SubjectRecording, MODALITY_NAMES, NUM_MODALITIES};
use super::split::class_boundaries;
use super::window::{plan_windows, WINDOW_LEN};
use super::{DataError, Result};

/// Standard deviations below this are treated as constant channels.
const MIN_SD: f64 = 1e-12;

/// Which samples feed the z-score statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    /// Whole recording, before windowing.
    #[default]
    Full,
    /// Only samples covered by each class's training windows (first 70%).
    TrainOnly,
}

/// Per-modality mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: [f64; NUM_MODALITIES],
    pub sd: [f64; NUM_MODALITIES],
}

impl NormStats {
    pub fn full(rec: &SubjectRecording) -> Result<Self> {
        Self::over(rec, |_| true)
    }

    fn over(rec: &SubjectRecording, include: impl Fn(usize) -> bool) -> Result<Self> {
        let mut mean = [0.0; NUM_MODALITIES];
        let mut sd = [0.0; NUM_MODALITIES];
        for (m, values) in rec.modalities().iter().enumerate() {
            if values.is_empty() {
                return Err(DataError::EmptyModality {
                    subject: rec.subject_id(),
                    modality: MODALITY_NAMES[m],
                });
            }
            let mut n = 0usize;
            let mut sum = 0.0;
            for (i, &x) in values.iter().enumerate() {
                if include(i) {
                    n += 1;
                    sum += x;
                }
            }
            if n == 0 {
                return Err(DataError::NoTrainSamples {
                    subject: rec.subject_id(),
                });
            }
            let mu = sum / n as f64;
            let ss: f64 = values
                .iter()
                .enumerate()
                .filter(|&(i, _)| include(i))
                .map(|(_, &x)| (x - mu) * (x - mu))
                .sum();
            mean[m] = mu;
            sd[m] = (ss / n as f64).sqrt();
        }
        Ok(Self { mean, sd })
    }
}

/// Z-score every modality over the subject's full recording.
pub fn normalize(rec: SubjectRecording) -> Result<SubjectRecording> {
    let stats = NormStats::full(&rec)?;
    Ok(normalize_with(rec, &stats))
}

/// `(x - mean) / sd`, or zeros for a constant modality.
pub fn normalize_with(rec: SubjectRecording, stats: &NormStats) -> SubjectRecording {
    rec.map_modalities(|m, mut values| {
        let (mu, sd) = (stats.mean[m], stats.sd[m]);
        for x in &mut values {
            *x = if sd < MIN_SD { 0.0 } else { (*x - mu) / sd };
        }
        values
    })
}

/// Statistics restricted to samples inside the training segment of each class.
pub fn train_segment_stats(rec: &SubjectRecording, map: &LabelMap) -> Result<NormStats> {
    let plan = plan_windows(rec.labels(), map);
    let mut covered = vec![false; rec.len()];
    for class in super::AffectClass::ALL {
        let starts: Vec<usize> = plan.kept.iter().filter(|(_, c)| *c == class).map(|&(s, _)| s).collect();
        let (n_train, _) = class_boundaries(starts.len());
        for &s in &starts[..n_train] {
            covered[s..s + WINDOW_LEN].fill(true);
        }
    }
    NormStats::over(rec, |i| covered[i])
}
