//! Deterministic synthetic subjects for desk-scale runs.
//!
//! Every subject gets three contiguous condition blocks (neutral, stress,
//! amusement, durations 55/30/15). Each modality is a class-dependent
//! sinusoid plus a per-class level, a subject-wide DC offset and Gaussian
//! noise. With `subject_offsets` on, every subject also draws its own
//! per-class level shift for every modality, so the class signature differs
//! from person to person and survives per-subject normalization (a
//! subject-wide DC offset alone does not).

use serde::{Deserialize, Serialize};

use super::recording::{AffectClass, LabelMap, SubjectRecording, NUM_MODALITIES, SAMPLE_RATE_HZ};
use crate::rng::{stream, Rng};

/// Per-class sinusoid frequency (Hz) and amplitude.
const CLASS_WAVE: [(f64, f64); 3] = [(17.0, 0.3), (31.0, 0.45), (47.0, 0.35)];
/// Condition block durations, neutral / stress / amusement.
const BLOCK_SHARE: [f64; 3] = [0.55, 0.30, 0.15];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub num_subjects: u16,
    /// Mean block duration; a subject records `3 * seconds_per_condition` seconds.
    pub seconds_per_condition: f64,
    pub seed: u64,
    pub subject_offsets: bool,
    pub noise_sd: f64,
    /// Scale of the class levels shared by every subject.
    pub shared_level: f64,
    /// Scale of the per-subject, per-class level shifts.
    pub offset_level: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_subjects: 3,
            seconds_per_condition: 4.0,
            seed: 0,
            subject_offsets: true,
            noise_sd: 1.0,
            shared_level: 0.25,
            offset_level: 1.5,
        }
    }
}

impl SynthConfig {
    /// Samples per class block.
    pub fn block_lengths(&self) -> [usize; 3] {
        let total = (3.0 * self.seconds_per_condition * SAMPLE_RATE_HZ as f64).round() as usize;
        let neutral = (total as f64 * BLOCK_SHARE[0]).round() as usize;
        let stress = (total as f64 * BLOCK_SHARE[1]).round() as usize;
        [neutral, stress, total.saturating_sub(neutral + stress)]
    }
}

pub fn synth_generate(cfg: &SynthConfig) -> Vec<SubjectRecording> {
    let mut rng = Rng::for_role(cfg.seed, stream::SYNTH);
    let map = LabelMap::default();
    let shared: Vec<[f64; NUM_MODALITIES]> = (0..3)
        .map(|_| std::array::from_fn(|_| cfg.shared_level * rng.uniform_range(-1.0, 1.0)))
        .collect();
    let blocks = cfg.block_lengths();
    let total: usize = blocks.iter().sum();
    let dt = 1.0 / SAMPLE_RATE_HZ as f64;

    (1..=cfg.num_subjects)
        .map(|subject_id| {
            let dc: [f64; NUM_MODALITIES] = std::array::from_fn(|_| rng.uniform_range(-5.0, 5.0));
            let phase: [f64; NUM_MODALITIES] = std::array::from_fn(|_| rng.uniform_range(0.0, std::f64::consts::TAU));
            let offsets: Vec<[f64; NUM_MODALITIES]> = (0..3)
                .map(|_| {
                    std::array::from_fn(|_| {
                        let u = rng.uniform_range(-1.0, 1.0);
                        if cfg.subject_offsets {
                            cfg.offset_level * u
                        } else {
                            0.0
                        }
                    })
                })
                .collect();

            let mut labels = Vec::with_capacity(total);
            let mut modalities = (0..NUM_MODALITIES)
                .map(|_| Vec::with_capacity(total))
                .collect::<Vec<Vec<f64>>>();
            let mut t = 0usize;
            for class in AffectClass::ALL {
                let c = class.index();
                let (freq, amp) = CLASS_WAVE[c];
                for _ in 0..blocks[c] {
                    labels.push(map.code_of(class));
                    let time = t as f64 * dt;
                    for (m, out) in modalities.iter_mut().enumerate() {
                        let wave = amp * (std::f64::consts::TAU * freq * time + phase[m]).sin();
                        let x = dc[m] + shared[c][m] + offsets[c][m] + wave + cfg.noise_sd * rng.normal();
                        // stored at sensor (f32) precision so container round trips are exact
                        out.push(x as f32 as f64);
                    }
                    t += 1;
                }
            }
            SubjectRecording::new(subject_id, modalities, labels).expect("synthetic recording is well formed")
        })
        .collect()
}
