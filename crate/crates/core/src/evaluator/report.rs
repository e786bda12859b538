//! Report emitters, selectable by name: `text`, `csv`, `json`.

use std::fs;
use std::path::Path;

use super::{EvalError, EvalReport};
use crate::registry::Registry;

pub trait ReportEmitter: Send + Sync {
    fn name(&self) -> &'static str;

    fn render(&self, report: &EvalReport) -> String;

    fn emit(&self, report: &EvalReport, path: &Path) -> Result<(), EvalError> {
        fs::write(path, self.render(report))?;
        Ok(())
    }
}

pub type EmitterFactory = fn() -> Box<dyn ReportEmitter>;

pub fn emitters() -> Registry<EmitterFactory> {
    Registry::<EmitterFactory>::new("report format")
        .with("text", || Box::new(TextTable))
        .with("csv", || Box::new(CsvReport))
        .with("json", || Box::new(JsonReport))
}

/// Two aligned tables: aggregate metrics, then hit rate per N.
#[derive(Debug, Default, Clone, Copy)]
pub struct TextTable;

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c + 1 == row.len() {
                line.push_str(cell);
            } else {
                line.push_str(&format!("{cell:<w$}  ", w = widths[c]));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

impl ReportEmitter for TextTable {
    fn name(&self) -> &'static str {
        "text"
    }

    fn render(&self, r: &EvalReport) -> String {
        let k = r.k;
        let mut out = format!("Tabular RAG Performance (k={k}, {} questions)\n\n", r.sample_count);
        out.push_str(&aligned(&[
            vec!["Evaluation Metric".into(), "Score".into()],
            vec![format!("Precision@{k}"), format!("{:.4}", r.precision)],
            vec![format!("Recall@{k}"), format!("{:.4}", r.recall)],
            vec![format!("Hit Rate@{k}"), format!("{:.4}", r.hit_rate)],
        ]));
        out.push_str(&format!("\nHit Rate@{k} breakdown with N value\n\n"));
        let mut rows = vec![vec![
            "N".to_string(),
            format!("Hit Rate@{k}"),
            "Number of questions".to_string(),
        ]];
        for (n, b) in &r.per_n {
            rows.push(vec![n.to_string(), format!("{:.4}", b.hit_rate), b.count.to_string()]);
        }
        out.push_str(&aligned(&rows));
        out
    }
}

/// `metric,value` rows, then an `n,hit_rate@k,count` block.
#[derive(Debug, Default, Clone, Copy)]
pub struct CsvReport;

impl ReportEmitter for CsvReport {
    fn name(&self) -> &'static str {
        "csv"
    }

    fn render(&self, r: &EvalReport) -> String {
        let k = r.k;
        let mut out = String::from("metric,value\n");
        out.push_str(&format!("precision@{k},{}\n", r.precision));
        out.push_str(&format!("recall@{k},{}\n", r.recall));
        out.push_str(&format!("hit_rate@{k},{}\n", r.hit_rate));
        out.push_str(&format!("sample_count,{}\n", r.sample_count));
        out.push_str(&format!("\nn,hit_rate@{k},count\n"));
        for (n, b) in &r.per_n {
            out.push_str(&format!("{n},{},{}\n", b.hit_rate, b.count));
        }
        out
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct JsonReport;

impl JsonReport {
    pub fn parse(text: &str) -> Result<EvalReport, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Parse(e.to_string()))
    }
}

impl ReportEmitter for JsonReport {
    fn name(&self) -> &'static str {
        "json"
    }

    fn render(&self, r: &EvalReport) -> String {
        let mut s = serde_json::to_string_pretty(r).expect("report serializes");
        s.push('\n');
        s
    }
}
