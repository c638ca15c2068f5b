//! Report rendering.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ExperimentReport, Measure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(format!(
                "unknown format `{s}` (expected csv, json or markdown)"
            )),
        }
    }
}

pub fn render(report: &ExperimentReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_scores_csv(report),
        ReportFormat::Json => report.to_json() + "\n",
        ReportFormat::Markdown => render_markdown(report),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Round-level scores, one row per (round, task, input type, feature, classifier).
pub fn render_scores_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("round,task,input_type,feature,classifier,mcc,f1\n");
    for s in &report.scores {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.round,
            s.task,
            csv_field(&s.input_type),
            csv_field(&s.feature),
            csv_field(&s.classifier),
            s.mcc,
            s.f1
        )
        .unwrap();
    }
    out
}

pub fn render_stats_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("measure,first,second,n_used,p,z,r,label\n");
    for s in &report.statistics {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.measure.name(),
            csv_field(&s.first),
            csv_field(&s.second),
            s.n_used,
            s.p_value,
            s.z,
            s.r,
            s.effect
        )
        .unwrap();
    }
    out
}

fn cell(value: Option<f64>, best: Option<f64>) -> String {
    match value {
        None => "-".into(),
        Some(v) => {
            let text = format!("{v:.3}");
            if best.is_some_and(|b| format!("{b:.3}") == text) {
                format!("**{text}**")
            } else {
                text
            }
        }
    }
}

/// Tasks as rows, input types as MCC and F1 column pairs, best value per
/// row and measure in bold, closed by an Average row.
pub fn render_markdown(report: &ExperimentReport) -> String {
    let measures = [Measure::Mcc, Measure::F1];
    let mut out = String::from("| Task |");
    for measure in measures {
        for input in &report.input_types {
            write!(out, " {input} {} |", measure.name().to_uppercase()).unwrap();
        }
    }
    out.push_str("\n|---|");
    for _ in 0..measures.len() * report.input_types.len() {
        out.push_str("---:|");
    }
    out.push('\n');
    if report.cells.is_empty() {
        return out;
    }
    let mut rows: Vec<(String, Vec<Option<f64>>)> = report
        .tasks
        .iter()
        .map(|&task| {
            let values = measures
                .iter()
                .flat_map(|&m| {
                    report
                        .input_types
                        .iter()
                        .map(move |i| report.table_value(task, i, m))
                })
                .collect();
            (task.title().to_string(), values)
        })
        .collect();
    let width = measures.len() * report.input_types.len();
    let average: Vec<Option<f64>> = (0..width)
        .map(|c| {
            let v: Vec<f64> = rows.iter().filter_map(|(_, vals)| vals[c]).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    rows.push(("Average".into(), average));
    let per_measure = report.input_types.len();
    for (title, values) in rows {
        write!(out, "| {title} |").unwrap();
        for block in values.chunks(per_measure) {
            let best = block.iter().flatten().copied().reduce(f64::max);
            for v in block {
                write!(out, " {} |", cell(*v, best)).unwrap();
            }
        }
        out.push('\n');
    }
    if !report.statistics.is_empty() {
        out.push_str("\n| Measure | First | Second | N | p | Z | r | Effect |\n");
        out.push_str("|---|---|---|---:|---:|---:|---:|---|\n");
        for s in &report.statistics {
            writeln!(
                out,
                "| {} | {} | {} | {} | {:.4} | {:.3} | {:.3} | {} |",
                s.measure.name().to_uppercase(),
                s.first,
                s.second,
                s.n_used,
                s.p_value,
                s.z,
                s.r,
                s.effect
            )
            .unwrap();
        }
    }
    out
}
