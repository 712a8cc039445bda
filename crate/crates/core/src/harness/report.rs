//! Partition report rendering: CSV, a plain-text table and an SVG bar chart.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{HarnessError, PartitionReport, PartitionRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Table,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "table" | "text" => Ok(ReportFormat::Table),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(HarnessError::MalformedReport(format!("unknown format `{other}`"))),
        }
    }
}

const HEADER: [&str; 5] = [
    "partition",
    "compute_seconds",
    "transfer_seconds",
    "total_seconds",
    "best",
];

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    partition: String,
    compute_seconds: f64,
    transfer_seconds: f64,
    total_seconds: f64,
    best: bool,
}

pub fn to_csv(report: &PartitionReport) -> String {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for r in &report.rows {
        w.serialize(CsvRow {
            partition: r.partition.clone(),
            compute_seconds: r.compute_seconds,
            transfer_seconds: r.transfer_seconds,
            total_seconds: r.total_seconds,
            best: report.argmin.as_deref() == Some(r.partition.as_str()),
        })
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

pub fn from_csv(text: &str) -> Result<PartitionReport, HarnessError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| HarnessError::MalformedReport(e.to_string()))?;
    if headers.iter().ne(HEADER) {
        return Err(HarnessError::MalformedReport(format!("unexpected header {headers:?}")));
    }
    let mut report = PartitionReport::default();
    for row in reader.deserialize::<CsvRow>() {
        let row = row.map_err(|e| HarnessError::MalformedReport(e.to_string()))?;
        if row.best {
            if report.argmin.is_some() {
                return Err(HarnessError::MalformedReport("more than one best row".into()));
            }
            report.argmin = Some(row.partition.clone());
        }
        report.rows.push(PartitionRow {
            partition: row.partition,
            compute_seconds: row.compute_seconds,
            transfer_seconds: row.transfer_seconds,
            total_seconds: row.total_seconds,
        });
    }
    Ok(report)
}

pub fn to_table(report: &PartitionReport) -> String {
    let width = report
        .rows
        .iter()
        .map(|r| r.partition.len())
        .chain([9])
        .max()
        .unwrap_or(9);
    let mut out = format!(
        "{:<width$}  {:>10}  {:>10}  {:>10}\n",
        "partition", "compute s", "transfer s", "total s"
    );
    for r in &report.rows {
        let mark = if report.argmin.as_deref() == Some(r.partition.as_str()) { "  *" } else { "" };
        let _ = writeln!(
            out,
            "{:<width$}  {:>10.3}  {:>10.3}  {:>10.3}{mark}",
            r.partition, r.compute_seconds, r.transfer_seconds, r.total_seconds
        );
    }
    out
}

/// Horizontal stacked bars: compute then transfer, scaled to the slowest
/// partition.
pub fn to_svg(report: &PartitionReport) -> String {
    const ROW: f64 = 28.0;
    const LABEL: f64 = 170.0;
    const BAR: f64 = 480.0;
    let max = report
        .rows
        .iter()
        .map(|r| r.total_seconds)
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let height = ROW * report.rows.len() as f64 + 40.0;
    let width = LABEL + BAR + 90.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    for (i, r) in report.rows.iter().enumerate() {
        let y = 10.0 + ROW * i as f64;
        let cw = BAR * r.compute_seconds / max;
        let tw = BAR * r.transfer_seconds / max;
        let weight = if report.argmin.as_deref() == Some(r.partition.as_str()) { "bold" } else { "normal" };
        let _ = writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-weight=\"{weight}\">{}</text>",
            LABEL - 8.0,
            y + 15.0,
            escape(&r.partition)
        );
        let _ = writeln!(
            svg,
            "  <rect x=\"{LABEL:.1}\" y=\"{y:.1}\" width=\"{cw:.2}\" height=\"20\" fill=\"#4e79a7\"/>"
        );
        let _ = writeln!(
            svg,
            "  <rect x=\"{:.2}\" y=\"{y:.1}\" width=\"{tw:.2}\" height=\"20\" fill=\"#f28e2b\"/>",
            LABEL + cw
        );
        let _ = writeln!(
            svg,
            "  <text x=\"{:.2}\" y=\"{:.1}\">{:.2} s</text>",
            LABEL + cw + tw + 6.0,
            y + 15.0,
            r.total_seconds
        );
    }
    let ly = height - 14.0;
    let _ = writeln!(
        svg,
        "  <rect x=\"{LABEL}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"#4e79a7\"/><text x=\"{}\" y=\"{ly:.1}\">compute</text>",
        ly - 9.0,
        LABEL + 14.0
    );
    let _ = writeln!(
        svg,
        "  <rect x=\"{}\" y=\"{:.1}\" width=\"10\" height=\"10\" fill=\"#f28e2b\"/><text x=\"{}\" y=\"{ly:.1}\">transfer</text>",
        LABEL + 90.0,
        ly - 9.0,
        LABEL + 104.0
    );
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(report: &PartitionReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => to_csv(report),
        ReportFormat::Table => to_table(report),
        ReportFormat::Svg => to_svg(report),
    }
}

pub fn emit_report(
    report: &PartitionReport,
    format: ReportFormat,
    path: &Path,
) -> Result<(), HarnessError> {
    std::fs::write(path, render(report, format)).map_err(|e| HarnessError::Io(e.to_string()))
}
