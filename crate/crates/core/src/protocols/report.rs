use std::path::Path;
use std::str::FromStr;

use super::{pct, ExperimentSummary, ProtocolError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(ProtocolError::Summary(format!("unknown report format {s:?}"))),
        }
    }
}

fn nonempty(summary: &ExperimentSummary) -> Result<()> {
    if summary.reports.is_empty() {
        Err(ProtocolError::EmptySummary)
    } else {
        Ok(())
    }
}

pub fn summary_to_json(summary: &ExperimentSummary) -> Result<String> {
    nonempty(summary)?;
    let mut s = serde_json::to_string_pretty(summary).map_err(|e| ProtocolError::Summary(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// One row per report, then one `aggregate` row per model type whose cells
/// read `mean (sd)`.
pub fn summary_to_csv(summary: &ExperimentSummary) -> Result<String> {
    nonempty(summary)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| ProtocolError::Summary(e.to_string());
    w.write_record([
        "model_type",
        "subject_id",
        "accuracy_pct",
        "f1_pct",
        "seed",
        "config_hash",
    ])
    .map_err(csv_err)?;
    for r in &summary.reports {
        w.write_record([
            r.model_type.as_str(),
            &r.subject_id.to_string(),
            &pct(r.accuracy),
            &pct(r.macro_f1),
            &r.seed.to_string(),
            &r.config_hash,
        ])
        .map_err(csv_err)?;
    }
    for a in &summary.aggregates {
        w.write_record([
            a.model_type.as_str(),
            "aggregate",
            &a.accuracy_pct,
            &a.f1_pct,
            &summary.config.train.seed.to_string(),
            &summary.config_hash,
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| ProtocolError::Summary(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn emit_report(summary: &ExperimentSummary, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Json => summary_to_json(summary)?,
        ReportFormat::Csv => summary_to_csv(summary)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

/// Parses a JSON summary as written by [`emit_report`].
pub fn summary_from_json(text: &str) -> Result<ExperimentSummary> {
    let summary: ExperimentSummary = serde_json::from_str(text).map_err(|e| ProtocolError::Summary(e.to_string()))?;
    nonempty(&summary)?;
    for r in &summary.reports {
        let in_range = |x: f64| (0.0..=1.0).contains(&x);
        if !in_range(r.accuracy) || !in_range(r.macro_f1) {
            return Err(ProtocolError::Summary(format!(
                "subject {} {}: metrics outside [0, 1]",
                r.subject_id, r.model_type
            )));
        }
    }
    Ok(summary)
}

pub fn read_summary(path: &Path) -> Result<ExperimentSummary> {
    summary_from_json(&std::fs::read_to_string(path)?)
}
