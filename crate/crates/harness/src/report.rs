//! Report rows mirroring the comparison-table column structure:
//! primary, target, strategy, train %, test %.

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown format `{other}` (expected text|csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub primary: String,
    pub target: String,
    pub strategy: String,
    pub train_err_pct: f64,
    pub test_err_pct: f64,
    pub seed: u64,
    pub epochs: usize,
}

pub const CSV_HEADER: &str = "primary,target,strategy,train_err_pct,test_err_pct,seed,epochs";

pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.2},{:.2},{},{}\n",
            r.primary, r.target, r.strategy, r.train_err_pct, r.test_err_pct, r.seed, r.epochs
        ));
    }
    out
}

pub fn to_text(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:<14} {:<12} {:>9} {:>9} {:>10} {:>7}\n",
        "primary", "target", "strategy", "train(%)", "test(%)", "seed", "epochs"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<14} {:<14} {:<12} {:>9.2} {:>9.2} {:>10} {:>7}\n",
            r.primary, r.target, r.strategy, r.train_err_pct, r.test_err_pct, r.seed, r.epochs
        ));
    }
    out
}

pub fn render(rows: &[ReportRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => to_text(rows),
        ReportFormat::Csv => to_csv(rows),
    }
}

/// Parse CSV emitted by [`to_csv`] back into rows.
pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(HarnessError::Report(format!(
                "bad CSV header: {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(HarnessError::Report(format!(
                "row {}: expected 7 fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        let parse_f = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| HarnessError::Report(format!("row {}: bad number `{s}`", i + 1)))
        };
        rows.push(ReportRow {
            primary: fields[0].to_string(),
            target: fields[1].to_string(),
            strategy: fields[2].to_string(),
            train_err_pct: parse_f(fields[3])?,
            test_err_pct: parse_f(fields[4])?,
            seed: fields[5]
                .parse()
                .map_err(|_| HarnessError::Report(format!("row {}: bad seed", i + 1)))?,
            epochs: fields[6]
                .parse()
                .map_err(|_| HarnessError::Report(format!("row {}: bad epochs", i + 1)))?,
        });
    }
    Ok(rows)
}

/// Error rate as a percentage, matching the tables' two-decimal rendering.
pub fn pct(err: f64) -> f64 {
    err * 100.0
}
