//! Comparison tables: one row per method, four metric columns per dataset.
//!
//! ACC, REC and PRE are printed as percentages, F1 as a fraction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cv::FoldReport;
use crate::metrics::MetricSummary;
use crate::model::Variant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    /// One entry per dataset, mean over folds.
    pub cells: Vec<MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub datasets: Vec<String>,
    pub rows: Vec<TableRow>,
}

pub const COLUMNS: [&str; 4] = ["ACC(%)", "REC(%)", "PRE(%)", "F1"];

/// Row label used in ablation tables.
pub fn method_name(v: Variant) -> String {
    match v {
        Variant::Full => "Ours".to_string(),
        other => format!("Variant {other}"),
    }
}

impl ResultTable {
    pub fn new(datasets: Vec<String>) -> Self {
        Self {
            datasets,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, method: impl Into<String>, cells: Vec<MetricSummary>) {
        assert_eq!(cells.len(), self.datasets.len(), "one cell per dataset");
        self.rows.push(TableRow {
            method: method.into(),
            cells,
        });
    }

    /// A single-dataset table from cross-validation reports.
    pub fn from_reports<'a>(dataset: &str, rows: impl IntoIterator<Item = (String, &'a FoldReport)>) -> Self {
        let mut t = Self::new(vec![dataset.to_string()]);
        for (method, r) in rows {
            t.push(method, vec![r.mean]);
        }
        t
    }

    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.method.len()).chain([7]).max().unwrap_or(7);
        let mut s = String::new();
        let _ = write!(s, "{:<width$}", "");
        for d in &self.datasets {
            let _ = write!(s, " | {:<35}", d);
        }
        s.push('\n');
        let _ = write!(s, "{:<width$}", "Methods");
        for _ in &self.datasets {
            let _ = write!(s, " | {:>8} {:>8} {:>8} {:>8}", COLUMNS[0], COLUMNS[1], COLUMNS[2], COLUMNS[3]);
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{:<width$}", row.method);
            for c in &row.cells {
                let _ = write!(
                    s,
                    " | {:>8.2} {:>8.2} {:>8.2} {:>8.3}",
                    100.0 * c.acc,
                    100.0 * c.rec,
                    100.0 * c.pre,
                    c.f1
                );
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_shape() {
        let mut t = ResultTable::new(vec!["MODMA".into(), "HUSM".into()]);
        let m = MetricSummary {
            acc: 0.9542,
            rec: 0.9,
            pre: 0.95,
            f1: 0.924,
        };
        t.push(method_name(Variant::A), vec![m, m]);
        t.push(method_name(Variant::Full), vec![m, m]);
        let text = t.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("MODMA") && lines[0].contains("HUSM"));
        assert_eq!(lines[1].matches("ACC(%)").count(), 2);
        assert!(lines[2].starts_with("Variant a"));
        assert!(lines[3].starts_with("Ours") && lines[3].contains("95.42") && lines[3].contains("0.924"));
    }
}
