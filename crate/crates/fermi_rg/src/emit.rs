//! Fixed-format emission of tables and reports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Float with 17 significant digits in scientific notation; stable across runs.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// Table cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Num(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => fmt_f64(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i32> for Cell {
    fn from(v: i32) -> Self {
        Cell::Int(v as i64)
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

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "true" } else { "false" }.into())
    }
}

/// Rectangular table with a fixed column schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Shape(format!(
                "row has {} cells, schema has {}",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.columns).map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rows {
            wr.write_record(r.iter().map(Cell::render))
                .map_err(|e| Error::Io(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }

    /// JSON array of objects in column order; floats keep full precision.
    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = serde_json::Map::new();
                for (c, v) in self.columns.iter().zip(r) {
                    m.insert(c.clone(), serde_json::to_value(v).expect("cell serializes"));
                }
                serde_json::Value::Object(m)
            })
            .collect();
        let doc = serde_json::json!({ "columns": self.columns, "rows": rows });
        serde_json::to_string(&doc).expect("table serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: serde_json::Value =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("table json: {e}")))?;
        let columns: Vec<String> = doc["columns"]
            .as_array()
            .ok_or_else(|| Error::Config("missing columns".into()))?
            .iter()
            .map(|c| c.as_str().unwrap_or_default().to_string())
            .collect();
        let mut t = Table {
            columns: columns.clone(),
            rows: Vec::new(),
        };
        for r in doc["rows"]
            .as_array()
            .ok_or_else(|| Error::Config("missing rows".into()))?
        {
            let row = columns
                .iter()
                .map(|c| serde_json::from_value::<Cell>(r[c].clone()))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("cell: {e}")))?;
            t.push(row)?;
        }
        Ok(t)
    }
}

/// Machine readable failure record.
pub fn diagnostic(kind: &str, message: &str, exit_code: i32) -> String {
    serde_json::json!({ "status": "error", "kind": kind, "message": message, "exitCode": exit_code })
        .to_string()
}
