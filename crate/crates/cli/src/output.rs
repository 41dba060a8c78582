//! Result tables and their CSV / JSON encodings.

use std::io::Write;

use serde::Serialize;
use serde_json::value::RawValue;

use crate::config::RawConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
    Missing,
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(x) if x.is_finite() => fmt_num(*x),
            Cell::Num(_) | Cell::Missing => String::new(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Box<RawValue> {
        let text = match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(x) if x.is_finite() => fmt_num(*x),
            Cell::Num(_) | Cell::Missing => "null".to_string(),
            Cell::Text(s) => serde_json::to_string(s).expect("string serializes"),
        };
        RawValue::from_string(text).expect("valid JSON literal")
    }
}

#[derive(Debug, Clone)]
pub struct Row {
    pub cells: Vec<Cell>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(Row { cells, error: None });
    }

    /// A row padded with missing cells, carrying the error that stopped it.
    pub fn push_failed(&mut self, mut cells: Vec<Cell>, error: String) {
        cells.resize(self.columns.len(), Cell::Missing);
        self.rows.push(Row { cells, error: Some(error) });
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.cells.iter().map(Cell::csv))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything a subcommand produces.
#[derive(Debug, Clone)]
pub struct Report {
    pub table: Table,
    /// Scalar results outside the table (fitted slopes, pass counts).
    pub summary: Vec<(&'static str, Cell)>,
    pub failed: bool,
}

impl Report {
    pub fn new(table: Table) -> Self {
        Self { table, summary: Vec::new(), failed: false }
    }
}

struct JsonRow<'a> {
    columns: &'a [&'static str],
    cells: Vec<Box<RawValue>>,
    error: Option<&'a str>,
}

impl Serialize for JsonRow<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.columns.len() + 1))?;
        for (col, cell) in self.columns.iter().zip(&self.cells) {
            map.serialize_entry(col, cell)?;
        }
        map.serialize_entry("error", &self.error)?;
        map.end()
    }
}

struct JsonSummary<'a>(&'a [(&'static str, Cell)]);

impl Serialize for JsonSummary<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, cell) in self.0 {
            map.serialize_entry(k, &cell.json())?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    version: &'a str,
    subcommand: &'a str,
    config: &'a std::collections::BTreeMap<String, String>,
    wall_time_s: Box<RawValue>,
    summary: JsonSummary<'a>,
    columns: &'a [&'static str],
    rows: Vec<JsonRow<'a>>,
    error: Option<String>,
}

pub fn write_json<W: Write>(
    mut out: W,
    report: &Report,
    subcommand: &str,
    raw: &RawConfig,
    wall_time_s: f64,
) -> Result<(), CliError> {
    let columns = &report.table.columns;
    let rows = report
        .table
        .rows
        .iter()
        .map(|r| JsonRow { columns, cells: r.cells.iter().map(Cell::json).collect(), error: r.error.as_deref() })
        .collect();
    let errors: Vec<&str> = report.table.rows.iter().filter_map(|r| r.error.as_deref()).collect();
    let doc = JsonDoc {
        version: crate::VERSION,
        subcommand,
        config: raw.entries(),
        wall_time_s: Cell::Num(wall_time_s).json(),
        summary: JsonSummary(&report.summary),
        columns,
        rows,
        error: if errors.is_empty() { None } else { Some(errors.join("; ")) },
    };
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    Ok(())
}
