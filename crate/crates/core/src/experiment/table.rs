//! Delimiter-separated output tables.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float(f64),
    Int(u64),
    Text(String),
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as u64)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Text(v)
    }
}

/// 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Value::Float(v) => f.write_str(&format_float(*v)),
            Value::Int(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

pub const DEFAULT_DELIMITER: u8 = b'\t';

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Removes the named column if present.
    pub fn drop_column(&mut self, name: &str) {
        if let Some(i) = self.header.iter().position(|h| h == name) {
            self.header.remove(i);
            for row in &mut self.rows {
                row.remove(i);
            }
        }
    }

    pub fn column(&self, name: &str) -> Option<impl Iterator<Item = &Value>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(move |r| &r[i]))
    }

    pub fn write_to<W: Write>(&self, out: W, delimiter: u8) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().delimiter(delimiter).from_writer(out);
        let wrap = |e: csv::Error| Error::Io {
            path: "<table output>".into(),
            source: std::io::Error::other(e),
        };
        writer.write_record(&self.header).map_err(wrap)?;
        for row in &self.rows {
            writer.write_record(row.iter().map(|v| v.to_string())).map_err(wrap)?;
        }
        writer.flush().map_err(|source| Error::Io {
            path: "<table output>".into(),
            source,
        })
    }

    pub fn to_string_with(&self, delimiter: u8) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf, delimiter).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 table")
    }
}
