use std::fmt;
use std::sync::Arc;

use super::normalize::{normalize_with, NormMode, NormStats};
use super::recording::{AffectClass, LabelMap, SubjectRecording, NUM_MODALITIES};
use super::{DataError, Result};
use crate::tensor::Real;

pub const WINDOW_LEN: usize = 64;
/// 50% overlap between consecutive windows.
pub const WINDOW_STRIDE: usize = 32;

/// A `[8, 64]` slice of a (normalized) recording carrying one class.
///
/// Windows share the underlying recording, so overlapping windows cost no
/// extra memory.
#[derive(Clone)]
pub struct Window {
    subject_id: u16,
    start: usize,
    label: AffectClass,
    source: Arc<SubjectRecording>,
}

impl fmt::Debug for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Window")
            .field("subject_id", &self.subject_id)
            .field("start", &self.start)
            .field("label", &self.label)
            .finish()
    }
}

/// Windows compare by identity: subject, start offset and label.
impl PartialEq for Window {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key() && self.label == other.label
    }
}

impl Eq for Window {}

impl Window {
    pub fn subject_id(&self) -> u16 {
        self.subject_id
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn label(&self) -> AffectClass {
        self.label
    }

    pub fn key(&self) -> (u16, usize) {
        (self.subject_id, self.start)
    }

    /// Channel-major copy of the signal, `8 * 64` values.
    pub fn signal(&self) -> Vec<f64> {
        let mut out = vec![0.0; NUM_MODALITIES * WINDOW_LEN];
        self.write_into(&mut out);
        out
    }

    pub fn write_into<T: Real>(&self, out: &mut [T]) {
        for (c, dst) in out.chunks_exact_mut(WINDOW_LEN).take(NUM_MODALITIES).enumerate() {
            let src = &self.source.modality(c)[self.start..self.start + WINDOW_LEN];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = T::lit(s);
            }
        }
    }
}

/// Window starts and classes derived from labels alone.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WindowPlan {
    pub kept: Vec<(usize, AffectClass)>,
    /// Windows whose labels map to more than one class.
    pub mixed: usize,
    /// Windows containing a code outside the label map.
    pub unmapped: usize,
}

impl WindowPlan {
    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for &(_, c) in &self.kept {
            counts[c.index()] += 1;
        }
        counts
    }

    /// Every stride-grid window, kept or discarded.
    pub fn total(&self) -> usize {
        self.kept.len() + self.mixed + self.unmapped
    }
}

pub fn plan_windows(labels: &[u8], map: &LabelMap) -> WindowPlan {
    let mut plan = WindowPlan::default();
    if labels.len() < WINDOW_LEN {
        return plan;
    }
    for start in (0..=labels.len() - WINDOW_LEN).step_by(WINDOW_STRIDE) {
        let span = &labels[start..start + WINDOW_LEN];
        let classes: Option<Vec<AffectClass>> = span.iter().map(|&c| map.class_of(c)).collect();
        match classes {
            None => plan.unmapped += 1,
            Some(cs) if cs.iter().all(|&c| c == cs[0]) => plan.kept.push((start, cs[0])),
            Some(_) => plan.mixed += 1,
        }
    }
    plan
}

#[derive(Debug, Clone)]
pub struct Windowed {
    pub subject_id: u16,
    pub windows: Vec<Window>,
    pub mixed: usize,
    pub unmapped: usize,
}

/// Stride-32 windows in ascending start order; only label-homogeneous windows
/// are kept.
pub fn make_windows(rec: Arc<SubjectRecording>, map: &LabelMap) -> Result<Windowed> {
    if rec.len() < WINDOW_LEN {
        return Err(DataError::TooShort {
            subject: rec.subject_id(),
            len: rec.len(),
        });
    }
    let plan = plan_windows(rec.labels(), map);
    let subject_id = rec.subject_id();
    let windows = plan
        .kept
        .iter()
        .map(|&(start, label)| Window {
            subject_id,
            start,
            label,
            source: Arc::clone(&rec),
        })
        .collect();
    Ok(Windowed {
        subject_id,
        windows,
        mixed: plan.mixed,
        unmapped: plan.unmapped,
    })
}

/// Normalize (per `mode`) then window one subject.
pub fn prepare_subject(rec: SubjectRecording, map: &LabelMap, mode: NormMode) -> Result<Windowed> {
    if rec.len() < WINDOW_LEN {
        return Err(DataError::TooShort {
            subject: rec.subject_id(),
            len: rec.len(),
        });
    }
    let stats = match mode {
        NormMode::Full => NormStats::full(&rec)?,
        NormMode::TrainOnly => super::normalize::train_segment_stats(&rec, map)?,
    };
    make_windows(Arc::new(normalize_with(rec, &stats)), map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec_with_labels(labels: Vec<u8>) -> Arc<SubjectRecording> {
        let n = labels.len();
        let modalities = (0..8)
            .map(|m| (0..n).map(|i| (m * 1000 + i) as f64).collect())
            .collect();
        Arc::new(SubjectRecording::new(1, modalities, labels).unwrap())
    }

    #[test]
    fn homogeneous_run_count() {
        let w = make_windows(rec_with_labels(vec![1; 256]), &LabelMap::default()).unwrap();
        assert_eq!(w.windows.len(), 7);
        let starts: Vec<usize> = w.windows.iter().map(Window::start).collect();
        assert_eq!(starts, vec![0, 32, 64, 96, 128, 160, 192]);
    }

    #[test]
    fn mixed_window_discarded() {
        let mut labels = vec![1; 128];
        labels.extend(vec![2; 128]);
        let w = make_windows(rec_with_labels(labels), &LabelMap::default()).unwrap();
        let starts: Vec<usize> = w.windows.iter().map(Window::start).collect();
        assert_eq!(starts, vec![0, 32, 64, 128, 160, 192]);
        assert_eq!(w.mixed, 1);
        assert_eq!(w.windows[3].label(), AffectClass::Stress);
    }

    #[test]
    fn unmapped_code_discards() {
        let mut labels = vec![1; 256];
        labels[100] = 4;
        let w = make_windows(rec_with_labels(labels), &LabelMap::default()).unwrap();
        // starts 64 and 96 cover index 100
        assert_eq!(w.unmapped, 2);
        assert_eq!(w.windows.len(), 5);
    }

    #[test]
    fn too_short() {
        assert!(matches!(
            make_windows(rec_with_labels(vec![1; 63]), &LabelMap::default()),
            Err(DataError::TooShort { len: 63, .. })
        ));
    }

    #[test]
    fn signal_layout() {
        let w = make_windows(rec_with_labels(vec![1; 128]), &LabelMap::default()).unwrap();
        let s = w.windows[1].signal();
        assert_eq!(s.len(), 512);
        assert_eq!(s[0], 32.0);
        assert_eq!(s[63], 95.0);
        assert_eq!(s[64], 1032.0);
    }

    #[test]
    fn window_count_formula() {
        for n in [64usize, 65, 95, 96, 97, 500, 1000] {
            let plan = plan_windows(&vec![2; n], &LabelMap::default());
            assert_eq!(plan.kept.len(), (n - 64) / 32 + 1, "n = {n}");
        }
    }
}
