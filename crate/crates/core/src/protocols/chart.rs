//! Grouped bar charts: one group per subject, one bar per model type.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{ExperimentSummary, MetricsReport, ProtocolError, Result};
use crate::data::Protocol;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    F1,
}

impl Metric {
    fn value(self, r: &MetricsReport) -> f64 {
        match self {
            Metric::Accuracy => r.accuracy,
            Metric::F1 => r.macro_f1,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Accuracy => "Accuracy (%)",
            Metric::F1 => "F1-score (%)",
        }
    }
}

impl FromStr for Metric {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "f1" => Ok(Metric::F1),
            other => Err(ProtocolError::UnknownMetric(other.into())),
        }
    }
}

const COLORS: [&str; 3] = ["#1b6ca8", "#f29e4c", "#5c946e"];
const BAR_W: f64 = 14.0;
const GROUP_GAP: f64 = 12.0;
const PLOT_H: f64 = 300.0;
const LEFT: f64 = 64.0;
const TOP: f64 = 56.0;
const BOTTOM: f64 = 44.0;
const RIGHT: f64 = 20.0;

/// Only bars are drawn as `<rect>`; axes, gridlines and legend swatches are paths.
pub fn render_bar_chart_svg(summary: &ExperimentSummary, metric: Metric) -> Result<String> {
    if summary.reports.is_empty() {
        return Err(ProtocolError::EmptySummary);
    }
    let subjects: BTreeSet<u16> = summary.reports.iter().map(|r| r.subject_id).collect();
    let group_w = 3.0 * BAR_W + GROUP_GAP;
    let plot_w = subjects.len() as f64 * group_w + GROUP_GAP;
    let width = LEFT + plot_w + RIGHT;
    let height = TOP + PLOT_H + BOTTOM;
    let base = TOP + PLOT_H;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let title = match metric {
        Metric::Accuracy => "Model accuracy per subject",
        Metric::F1 => "Model F1-score per subject",
    };
    let _ = writeln!(
        s,
        "<desc>config_hash={} config={}</desc>",
        summary.config_hash,
        xml_escape(&summary.config.canonical_json())
    );
    let _ = writeln!(s, r#"<text x="{LEFT:.0}" y="18" font-size="14">{title}</text>"#);

    for tick in (0..=100).step_by(20) {
        let y = base - PLOT_H * tick as f64 / 100.0;
        let _ = writeln!(
            s,
            r##"<path d="M{LEFT:.2} {y:.2}H{:.2}" stroke="#dddddd" stroke-width="1"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{tick}%</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r##"<path d="M{LEFT:.2} {TOP:.2}V{base:.2}H{:.2}" stroke="#000000" fill="none"/>"##,
        LEFT + plot_w
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + PLOT_H / 2.0,
        metric.label()
    );

    for (g, &subject) in subjects.iter().enumerate() {
        let x0 = LEFT + GROUP_GAP + g as f64 * group_w;
        for (k, p) in Protocol::ALL.iter().enumerate() {
            let Some(r) = summary
                .reports
                .iter()
                .find(|r| r.subject_id == subject && r.model_type == *p)
            else {
                continue;
            };
            let h = PLOT_H * metric.value(r).clamp(0.0, 1.0);
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{BAR_W:.2}" height="{h:.2}" fill="{}"><title>S{subject} {p}: {:.2}%</title></rect>"#,
                x0 + k as f64 * BAR_W,
                base - h,
                COLORS[k],
                100.0 * metric.value(r)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">S{subject}</text>"#,
            x0 + 1.5 * BAR_W,
            base + 16.0
        );
    }

    for (k, p) in Protocol::ALL.iter().enumerate() {
        let x = LEFT + k as f64 * 150.0;
        let y = 32.0;
        let _ = writeln!(s, r#"<path d="M{x:.2} {y:.2}h10v10h-10Z" fill="{}"/>"#, COLORS[k]);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{p}</text>"#, x + 14.0, y + 9.0);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn emit_bar_chart_svg(summary: &ExperimentSummary, metric: Metric, path: &Path) -> Result<()> {
    std::fs::write(path, render_bar_chart_svg(summary, metric)?)?;
    Ok(())
}
