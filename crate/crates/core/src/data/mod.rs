//! Subject recordings, the AFB1 container, and the windowing/splitting pipeline.

mod afb;
mod normalize;
mod recording;
mod resample;
mod split;
mod synth;
mod window;

pub use afb::{decode_afb, encode_afb, load_subject, write_subject, AfbError, AFB_MAGIC, AFB_VERSION};
pub use normalize::{normalize, normalize_with, train_segment_stats, NormMode, NormStats};
pub use recording::{AffectClass, LabelMap, SubjectRecording, MODALITY_NAMES, NUM_MODALITIES, SAMPLE_RATE_HZ};
pub use resample::resample_linear;
pub use split::{
    class_boundaries, split_personalized, split_subject_exclusive, split_subject_inclusive, Protocol, SplitTriple,
    SubjectWindows,
};
pub use synth::{synth_generate, SynthConfig};
pub use window::{
    make_windows, plan_windows, prepare_subject, Window, WindowPlan, Windowed, WINDOW_LEN, WINDOW_STRIDE,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("subject {subject}: recording has {len} samples, fewer than one {WINDOW_LEN}-sample window")]
    TooShort { subject: u16, len: usize },
    #[error("subject {subject}: modality {modality} is empty")]
    EmptyModality { subject: u16, modality: &'static str },
    #[error("recording invariant violated: {0}")]
    InvalidRecording(String),
    #[error("subject {subject}: class {class:?} has {count} windows, at least 3 required")]
    ClassTooSmall {
        subject: u16,
        class: AffectClass,
        count: usize,
    },
    #[error("protocol needs at least {needed} subjects, got {found}")]
    TooFewSubjects { needed: usize, found: usize },
    #[error("unknown test subject {0}")]
    UnknownSubject(u16),
    #[error("duplicate subject id {0}")]
    DuplicateSubject(u16),
    #[error("subject {subject}: no samples fall inside training windows")]
    NoTrainSamples { subject: u16 },
    #[error("resampling: {0}")]
    Resample(String),
}

pub type Result<T> = std::result::Result<T, DataError>;
