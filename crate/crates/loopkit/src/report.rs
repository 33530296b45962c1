//! Tabular run reports with CSV and JSON serialization.
//!
//! CSV layout: comment header lines (`# key: value`), one column-name row,
//! then data rows. Floats are written with the shortest round-trip decimal
//! representation so identical runs diff cleanly.

use crate::error::Result;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

/// One report cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Str(String),
    Num(f64),
    Int(i64),
    Bool(bool),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            // Display for f64 is the shortest representation that parses
            // back to the same bits
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => format!("{v}"),
            Cell::Bool(v) => format!("{v}"),
            Cell::Str(s) => {
                if s.contains(',') || s.contains('"') || s.contains('\n') {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => json!(v),
            Cell::Int(v) => json!(v),
            Cell::Bool(v) => json!(v),
            Cell::Str(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Str(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Str(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

/// Output format of a run report.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// A run report: header metadata plus a rectangular table.
#[derive(Clone, Debug)]
pub struct Report {
    header: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Report {
    /// Report with the given columns; the seed is always recorded, and a
    /// timestamp header is added unless suppressed.
    pub fn new(command: &str, seed: u64, with_timestamp: bool, columns: &[&str]) -> Self {
        let mut header = vec![
            ("command".to_string(), command.to_string()),
            ("seed".to_string(), seed.to_string()),
        ];
        if with_timestamp {
            let now = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            header.push(("timestamp".to_string(), now.to_string()));
        }
        Self {
            header,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn add_header(&mut self, key: &str, value: &str) {
        self.header.push((key.to_string(), value.to_string()));
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match columns");
        self.rows.push(row);
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let header: serde_json::Map<String, Value> = self
            .header
            .iter()
            .map(|(k, v)| (k.clone(), json!(v)))
            .collect();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: serde_json::Map<String, Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, cell)| (c.clone(), cell.json()))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        let doc = json!({ "header": header, "columns": self.columns, "rows": rows });
        serde_json::to_string_pretty(&doc).expect("report serialization cannot fail")
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }

    /// Write to `path`, or to stdout when no path is given.
    pub fn write(&self, path: Option<&Path>, format: Format) -> Result<()> {
        let text = self.render(format);
        match path {
            Some(p) => std::fs::write(p, text)?,
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(text.as_bytes())?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout_and_float_round_trip() {
        let mut r = Report::new("moments", 42, false, &["name", "value", "pass"]);
        r.push_row(vec!["mu".into(), (1.0 / 9.0).into(), true.into()]);
        let csv = r.to_csv();
        assert!(csv.starts_with("# command: moments\n# seed: 42\n"));
        assert!(csv.contains("name,value,pass\n"));
        let val_line = csv.lines().last().unwrap();
        let field = val_line.split(',').nth(1).unwrap();
        assert_eq!(field.parse::<f64>().unwrap(), 1.0 / 9.0);
    }

    #[test]
    fn csv_quotes_special_strings() {
        let mut r = Report::new("x", 0, false, &["s"]);
        r.push_row(vec!["a,b \"q\"".into()]);
        assert!(r.to_csv().contains("\"a,b \"\"q\"\"\""));
    }

    #[test]
    fn timestamp_suppressible() {
        let with = Report::new("x", 1, true, &["c"]);
        let without = Report::new("x", 1, false, &["c"]);
        assert!(with.to_csv().contains("# timestamp:"));
        assert!(!without.to_csv().contains("timestamp"));
    }

    #[test]
    fn json_round_trips() {
        let mut r = Report::new("check", 7, false, &["name", "value"]);
        r.add_header("model", "two_state");
        r.push_row(vec!["resolvent".into(), 1e-12.into()]);
        let doc: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(doc["header"]["seed"], "7");
        assert_eq!(doc["header"]["model"], "two_state");
        assert_eq!(doc["rows"][0]["name"], "resolvent");
        assert_eq!(doc["rows"][0]["value"], 1e-12);
    }
}
