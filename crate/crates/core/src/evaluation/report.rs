//! Text and CSV renderings of an [`EvaluationReport`].

use std::fmt::Write as _;
use std::str::FromStr;

use super::experiment::EvaluationReport;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Text,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Text => "txt",
            ReportFormat::Csv => "csv",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "txt" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!("report format {other:?}: expected text or csv"))),
        }
    }
}

pub const CSV_HEADER: [&str; 8] = [
    "experiment_id",
    "split_ratio",
    "class_name",
    "precision",
    "recall",
    "f1",
    "support",
    "macro_f1",
];

/// One CSV row. The `MACRO` row carries unweighted means and the total support.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment_id: String,
    pub split_ratio: String,
    pub class_name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub macro_f1: f64,
}

pub fn report_rows(report: &EvaluationReport) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for r in &report.results {
        let m = &r.metrics;
        let split_ratio = r.split.label();
        for (name, c) in report.class_names.iter().zip(&m.per_class) {
            rows.push(ReportRow {
                experiment_id: report.id.clone(),
                split_ratio: split_ratio.clone(),
                class_name: name.clone(),
                precision: c.precision,
                recall: c.recall,
                f1: c.f1,
                support: c.support,
                macro_f1: m.macro_f1,
            });
        }
        let k = m.per_class.len().max(1) as f64;
        rows.push(ReportRow {
            experiment_id: report.id.clone(),
            split_ratio,
            class_name: "MACRO".into(),
            precision: m.per_class.iter().map(|c| c.precision).sum::<f64>() / k,
            recall: m.per_class.iter().map(|c| c.recall).sum::<f64>() / k,
            f1: m.macro_f1,
            support: m.per_class.iter().map(|c| c.support).sum(),
            macro_f1: m.macro_f1,
        });
    }
    rows
}

pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(report),
        ReportFormat::Csv => render_csv(report),
    }
}

fn render_csv(report: &EvaluationReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    // writing into a Vec cannot fail
    w.write_record(CSV_HEADER).unwrap();
    for row in report_rows(report) {
        w.write_record([
            row.experiment_id,
            row.split_ratio,
            row.class_name,
            row.precision.to_string(),
            row.recall.to_string(),
            row.f1.to_string(),
            row.support.to_string(),
            row.macro_f1.to_string(),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

/// Reads back what the CSV renderer wrote.
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::format("report", e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::format("report", format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format("report", e.to_string()))?;
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse()
                .map_err(|_| Error::format("report", format!("row {}: bad {} {:?}", i + 1, CSV_HEADER[j], &rec[j])))
        };
        rows.push(ReportRow {
            experiment_id: rec[0].to_string(),
            split_ratio: rec[1].to_string(),
            class_name: rec[2].to_string(),
            precision: num(3)?,
            recall: num(4)?,
            f1: num(5)?,
            support: rec[6]
                .parse()
                .map_err(|_| Error::format("report", format!("row {}: bad support", i + 1)))?,
            macro_f1: num(7)?,
        });
    }
    Ok(rows)
}

fn render_text(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let names = &report.class_names;
    let _ = writeln!(out, "experiment {}  seed {}", report.id, report.seed);
    let _ = writeln!(out, "input frames {}", report.input_frames);
    for (k, name) in names.iter().enumerate() {
        let _ = writeln!(out, "  class {k}: {name}");
    }
    let name_width = names.iter().map(|n| n.len()).max().unwrap_or(0).max("macro F1".len());
    for r in &report.results {
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "split {}  train {}  val {}  test {}  epochs {}  best epoch {}",
            r.split.label(),
            r.train_size,
            r.val_size,
            r.test_size,
            r.history.epochs(),
            r.history.best_epoch + 1
        );
        let m = &r.matrix;
        let cell = (0..m.classes())
            .flat_map(|t| m.row(t).iter().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(1)
            .max(m.classes().saturating_sub(1).to_string().len())
            .max(3);
        let _ = writeln!(out, "confusion matrix (rows true, columns predicted)");
        let _ = write!(out, "{:>cell$}", "");
        for p in 0..m.classes() {
            let _ = write!(out, " {p:>cell$}");
        }
        let _ = writeln!(out);
        for t in 0..m.classes() {
            let _ = write!(out, "{t:>cell$}");
            for c in m.row(t) {
                let _ = write!(out, " {c:>cell$}");
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(
            out,
            "{:<name_width$}  {:>9}  {:>9}  {:>9}  {:>7}",
            "class", "precision", "recall", "f1", "support"
        );
        let mut any_undefined = false;
        for (name, c) in names.iter().zip(&r.metrics.per_class) {
            any_undefined |= c.undefined;
            let _ = writeln!(
                out,
                "{:<name_width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}{}",
                name,
                c.precision,
                c.recall,
                c.f1,
                c.support,
                if c.undefined { "  *" } else { "" }
            );
        }
        let _ = writeln!(out, "{:<name_width$}  {:>9}  {:>9}  {:>9.4}", "macro F1", "", "", r.metrics.macro_f1);
        if any_undefined {
            let _ = writeln!(out, "* a 0/0 ratio was scored as 0");
        }
    }
    out
}
