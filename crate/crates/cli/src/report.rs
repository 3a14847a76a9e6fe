//! Deterministic CSV tables and the JSON run summary.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Self::Float(v) => write!(out, "{v:.16e}"),
            Self::Int(v) => write!(out, "{v}"),
            Self::Text(s) => write!(out, "{s}"),
            Self::Bool(b) => write!(out, "{b}"),
        }
        .expect("writing to a string");
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Self::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Self::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Self::Text(v.to_owned())
    }
}

#[derive(Clone, Debug)]
pub struct Table {
    /// File stem of the CSV.
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&'static str]) -> Self {
        Self { name: name.to_owned(), columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// CSV text preceded by `#` lines naming the check and the config hash.
    pub fn render(&self, tag: &str, config_hash: &str) -> String {
        let mut s = format!("# check: {tag}\n# config: {config_hash}\n{}\n", self.columns.join(","));
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                cell.render(&mut s);
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckSummary {
    pub check: String,
    pub tag: String,
    pub passed: bool,
    pub detail: String,
    pub metrics: Map<String, Value>,
    pub tables: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub field_hash: String,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckSummary>,
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(dir, name, &text)
}
