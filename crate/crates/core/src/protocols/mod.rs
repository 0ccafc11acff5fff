//! Metrics, the three experiment runners, aggregation and report output.

mod chart;
mod metrics;
mod report;

pub use chart::{emit_bar_chart_svg, render_bar_chart_svg, Metric};
pub use metrics::{ClassMetrics, ConfusionMatrix, NUM_CLASSES};
pub use report::{emit_report, read_summary, summary_from_json, summary_to_csv, summary_to_json, ReportFormat};

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{sha256_hex, ConfigError, ExperimentConfig};
use crate::data::{
    prepare_subject, split_personalized, split_subject_exclusive, split_subject_inclusive, DataError, Protocol,
    SubjectRecording, SubjectWindows, Window,
};
use crate::nn::{EmotionNet, NnError};
use crate::rng::{stream, Rng};
use crate::tensor::{Real, TensorError};
use crate::train::{evaluate, train, Precision, TrainError, TrainReport};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{protocol} run{}: {source}", subject.map(|s| format!(" for subject {s}")).unwrap_or_default())]
    Train {
        protocol: Protocol,
        subject: Option<u16>,
        source: TrainError,
    },
    #[error("metrics: {0}")]
    Metrics(String),
    #[error("summary has no reports")]
    EmptySummary,
    #[error("unknown metric {0:?}, expected accuracy or f1")]
    UnknownMetric(String),
    #[error("malformed summary: {0}")]
    Summary(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ProtocolError {
    /// True when the failure is a NaN/inf during training rather than bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            ProtocolError::Train { source, .. } => matches!(
                source,
                TrainError::NonFiniteLoss { .. }
                    | TrainError::NonFiniteGradient(_)
                    | TrainError::Model(NnError::Tensor(TensorError::NonFinite(_)))
            ),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

/// Windowed, normalized subjects in ascending id order.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub subjects: Vec<SubjectWindows>,
    /// `(subject, mixed, unmapped)` discarded window counts.
    pub discarded: Vec<(u16, usize, usize)>,
}

impl Cohort {
    pub fn ids(&self) -> Vec<u16> {
        self.subjects.iter().map(|s| s.subject_id).collect()
    }
}

pub fn prepare(recordings: Vec<SubjectRecording>, cfg: &ExperimentConfig) -> Result<Cohort> {
    let mut seen = BTreeSet::new();
    for r in &recordings {
        if !seen.insert(r.subject_id()) {
            return Err(DataError::DuplicateSubject(r.subject_id()).into());
        }
    }
    let mut windowed = recordings
        .into_par_iter()
        .map(|r| prepare_subject(r, &cfg.data.label_map, cfg.data.norm_mode))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    windowed.sort_by_key(|w| w.subject_id);
    Ok(Cohort {
        discarded: windowed.iter().map(|w| (w.subject_id, w.mixed, w.unmapped)).collect(),
        subjects: windowed
            .into_iter()
            .map(|w| SubjectWindows {
                subject_id: w.subject_id,
                windows: w.windows,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub subject_id: u16,
    pub model_type: Protocol,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Neutral, stress, amusement.
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub confusion: ConfusionMatrix,
    pub test_windows: usize,
    pub seed: u64,
    pub config_hash: String,
    pub checkpoint_hash: String,
    pub best_epoch: u32,
}

/// One training run's persisted outputs.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub name: String,
    pub checkpoint: Vec<u8>,
    pub report: TrainReport,
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub reports: Vec<MetricsReport>,
    pub runs: Vec<TrainedRun>,
}

struct Fitted {
    checkpoint: Vec<u8>,
    report: TrainReport,
    predictions: Vec<Vec<usize>>,
}

fn fit_typed<T: Real>(
    cfg: &ExperimentConfig,
    train_set: &[Window],
    val_set: &[Window],
    tests: &[&[Window]],
) -> std::result::Result<Fitted, TrainError> {
    let model = EmotionNet::<T>::build(cfg.model.clone(), &mut Rng::for_role(cfg.train.seed, stream::INIT))?;
    let (best, report) = train(model, train_set, val_set, &cfg.train)?;
    let batch = cfg.train.batch_size as usize;
    let predictions = tests
        .iter()
        .map(|t| evaluate(&best.model, t, batch).map(|e| e.predictions))
        .collect::<std::result::Result<_, _>>()?;
    Ok(Fitted {
        checkpoint: best.to_bytes(),
        report,
        predictions,
    })
}

fn fit(
    cfg: &ExperimentConfig,
    train_set: &[Window],
    val_set: &[Window],
    tests: &[&[Window]],
) -> std::result::Result<Fitted, TrainError> {
    match cfg.train.precision {
        Precision::F32 => fit_typed::<f32>(cfg, train_set, val_set, tests),
        Precision::F64 => fit_typed::<f64>(cfg, train_set, val_set, tests),
    }
}

fn score(
    protocol: Protocol,
    subject_id: u16,
    test: &[Window],
    predictions: &[usize],
    fitted: &Fitted,
    cfg: &ExperimentConfig,
) -> Result<MetricsReport> {
    let truth: Vec<usize> = test.iter().map(|w| w.label().index()).collect();
    let cm = ConfusionMatrix::from_labels(&truth, predictions)?;
    Ok(MetricsReport {
        subject_id,
        model_type: protocol,
        accuracy: cm.accuracy()?,
        macro_f1: cm.macro_f1()?,
        per_class: cm.per_class(),
        confusion: cm,
        test_windows: test.len(),
        seed: cfg.train.seed,
        config_hash: cfg.hash(),
        checkpoint_hash: sha256_hex(&fitted.checkpoint),
        best_epoch: fitted.report.best_epoch,
    })
}

fn run_name(protocol: Protocol, subject: Option<u16>) -> String {
    match subject {
        Some(s) => format!("{protocol}-s{s:02}"),
        None => protocol.to_string(),
    }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ProtocolError::ThreadPool(e.to_string()))
}

/// One model per held-out subject, trained in parallel on up to `jobs`
/// threads (0 = all cores). Output order follows the cohort.
fn per_subject_runs(protocol: Protocol, cohort: &Cohort, cfg: &ExperimentConfig, jobs: usize) -> Result<ProtocolRun> {
    cfg.validate()?;
    if cohort.subjects.is_empty() {
        return Err(DataError::TooFewSubjects { needed: 1, found: 0 }.into());
    }
    // split up front so precondition failures surface before any training
    let splits = cohort
        .subjects
        .iter()
        .map(|s| match protocol {
            Protocol::Personalized => split_personalized(s),
            Protocol::SubjectExclusive => split_subject_exclusive(&cohort.subjects, s.subject_id),
            Protocol::SubjectInclusive => unreachable!("inclusive trains once"),
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let outcomes: Vec<Result<(MetricsReport, TrainedRun)>> = pool(jobs)?.install(|| {
        splits
            .par_iter()
            .map(|split| {
                let subject = split.test_subject;
                let fitted =
                    fit(cfg, &split.train, &split.val, &[&split.test]).map_err(|source| ProtocolError::Train {
                        protocol,
                        subject: Some(subject),
                        source,
                    })?;
                let report = score(protocol, subject, &split.test, &fitted.predictions[0], &fitted, cfg)?;
                Ok((
                    report,
                    TrainedRun {
                        name: run_name(protocol, Some(subject)),
                        checkpoint: fitted.checkpoint,
                        report: fitted.report,
                    },
                ))
            })
            .collect()
    });
    let mut out = ProtocolRun {
        reports: Vec::new(),
        runs: Vec::new(),
    };
    for o in outcomes {
        let (report, run) = o?;
        out.reports.push(report);
        out.runs.push(run);
    }
    Ok(out)
}

/// Each subject trains, validates and tests on its own windows.
pub fn run_personalized(cohort: &Cohort, cfg: &ExperimentConfig, jobs: usize) -> Result<ProtocolRun> {
    per_subject_runs(Protocol::Personalized, cohort, cfg, jobs)
}

/// One model per subject, trained on every other subject.
pub fn run_subject_exclusive(cohort: &Cohort, cfg: &ExperimentConfig, jobs: usize) -> Result<ProtocolRun> {
    if cohort.subjects.len() < 2 {
        return Err(DataError::TooFewSubjects {
            needed: 2,
            found: cohort.subjects.len(),
        }
        .into());
    }
    per_subject_runs(Protocol::SubjectExclusive, cohort, cfg, jobs)
}

/// A single model trained on all subjects, tested on each subject's final segment.
pub fn run_subject_inclusive(cohort: &Cohort, cfg: &ExperimentConfig, jobs: usize) -> Result<ProtocolRun> {
    cfg.validate()?;
    let protocol = Protocol::SubjectInclusive;
    let splits = cohort
        .subjects
        .iter()
        .map(|s| split_subject_inclusive(&cohort.subjects, s.subject_id))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let first = splits
        .first()
        .ok_or(DataError::TooFewSubjects { needed: 1, found: 0 })?;
    let tests: Vec<&[Window]> = splits.iter().map(|s| s.test.as_slice()).collect();
    let fitted = pool(jobs)?
        .install(|| fit(cfg, &first.train, &first.val, &tests))
        .map_err(|source| ProtocolError::Train {
            protocol,
            subject: None,
            source,
        })?;
    let reports = splits
        .iter()
        .zip(&fitted.predictions)
        .map(|(s, p)| score(protocol, s.test_subject, &s.test, p, &fitted, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProtocolRun {
        reports,
        runs: vec![TrainedRun {
            name: run_name(protocol, None),
            checkpoint: fitted.checkpoint,
            report: fitted.report,
        }],
    })
}

pub fn run_protocol(protocol: Protocol, cohort: &Cohort, cfg: &ExperimentConfig, jobs: usize) -> Result<ProtocolRun> {
    match protocol {
        Protocol::Personalized => run_personalized(cohort, cfg, jobs),
        Protocol::SubjectInclusive => run_subject_inclusive(cohort, cfg, jobs),
        Protocol::SubjectExclusive => run_subject_exclusive(cohort, cfg, jobs),
    }
}

/// Mean and sample standard deviation (fractions).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Absent with fewer than two observations.
    pub sd: Option<f64>,
}

impl Stat {
    /// Single pass (Welford).
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mut mean, mut m2) = (0.0, 0.0);
        for (i, &x) in values.iter().enumerate() {
            let d = x - mean;
            mean += d / (i + 1) as f64;
            m2 += d * (x - mean);
        }
        let n = values.len();
        let sd = (n >= 2).then(|| (m2 / (n - 1) as f64).sqrt());
        Some(Self { mean, sd })
    }

    /// `"95.06 (9.24)"`, or just the mean when the SD is absent.
    pub fn percent_cell(&self) -> String {
        match self.sd {
            Some(sd) => format!("{} ({})", pct(self.mean), pct(sd)),
            None => pct(self.mean),
        }
    }
}

/// Fraction to a percent string with two decimals.
pub fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model_type: Protocol,
    pub count: usize,
    pub accuracy: Stat,
    pub macro_f1: Stat,
    pub accuracy_pct: String,
    pub f1_pct: String,
    pub sd_omitted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub reports: Vec<MetricsReport>,
    pub aggregates: Vec<Aggregate>,
}

/// Sorts reports by model type then subject and adds one aggregate per model type.
pub fn aggregate(config: &ExperimentConfig, mut reports: Vec<MetricsReport>) -> Result<ExperimentSummary> {
    if reports.is_empty() {
        return Err(ProtocolError::EmptySummary);
    }
    reports.sort_by_key(|r| (r.model_type, r.subject_id));
    let aggregates = Protocol::ALL
        .iter()
        .filter_map(|&p| {
            let rows: Vec<&MetricsReport> = reports.iter().filter(|r| r.model_type == p).collect();
            let acc = Stat::of(&rows.iter().map(|r| r.accuracy).collect::<Vec<_>>())?;
            let f1 = Stat::of(&rows.iter().map(|r| r.macro_f1).collect::<Vec<_>>())?;
            Some(Aggregate {
                model_type: p,
                count: rows.len(),
                accuracy_pct: acc.percent_cell(),
                f1_pct: f1.percent_cell(),
                accuracy: acc,
                macro_f1: f1,
                sd_omitted: rows.len() < 2,
            })
        })
        .collect();
    Ok(ExperimentSummary {
        config: config.clone(),
        config_hash: config.hash(),
        reports,
        aggregates,
    })
}
