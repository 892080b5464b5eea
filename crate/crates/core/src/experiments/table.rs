use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::ExperimentConfig;
use crate::io::{atomic_write, fmt_sig9};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(x) => Some(*x),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) if x.is_finite() => fmt_sig9(*x),
            Cell::Text(s) => s.clone(),
            Cell::Float(_) | Cell::Missing => String::new(),
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Rectangular result of one experiment plus named summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub experiment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Trend statistics, keyed by name. Non-finite values mean undefined.
    pub summary: BTreeMap<String, f64>,
    pub config_hash: String,
}

impl ResultTable {
    pub fn new(experiment: &str, columns: &[&str]) -> Self {
        Self {
            experiment: experiment.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: BTreeMap::new(),
            config_hash: String::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the columns");
        self.rows.push(row);
    }

    pub fn set(&mut self, key: impl Into<String>, value: f64) {
        self.summary.insert(key.into(), value);
    }

    pub fn stat(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column, `None` for missing or text cells.
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i].as_f64()).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out += &cells.join(",");
            out.push('\n');
        }
        out
    }

    pub fn meta_json(&self, config: &ExperimentConfig) -> serde_json::Value {
        let summary: BTreeMap<&String, serde_json::Value> = self
            .summary
            .iter()
            .map(|(k, v)| (k, if v.is_finite() { json!(v) } else { serde_json::Value::Null }))
            .collect();
        json!({
            "experiment": self.experiment,
            "config_sha256": self.config_hash,
            "seed": config.seed,
            "columns": self.columns,
            "rows": self.rows.len(),
            "summary": summary,
            "config": config,
        })
    }

    /// Path of the metadata sidecar written next to `csv`.
    pub fn meta_path(csv: &Path) -> PathBuf {
        let mut name = csv.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".meta.json");
        csv.with_file_name(name)
    }

    /// Writes the CSV and its metadata sidecar, each atomically.
    pub fn write(&self, csv: &Path, config: &ExperimentConfig) -> std::io::Result<()> {
        atomic_write(csv, self.to_csv().as_bytes())?;
        let meta = serde_json::to_string_pretty(&self.meta_json(config)).expect("meta serializes") + "\n";
        atomic_write(&Self::meta_path(csv), meta.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_cells() {
        let mut t = ResultTable::new("x", &["a", "b", "c"]);
        t.push(vec![3usize.into(), 0.1f64.into(), Cell::Missing]);
        t.push(vec!["1->2".into(), f64::NAN.into(), Some(2.5).into()]);
        assert_eq!(t.to_csv(), "a,b,c\n3,0.1,\n1->2,,2.5\n");
        assert_eq!(t.column("c").unwrap(), vec![None, Some(2.5)]);
        assert_eq!(ResultTable::meta_path(Path::new("out/r.csv")), Path::new("out/r.csv.meta.json"));
    }

    #[test]
    #[should_panic]
    fn ragged_rows_are_rejected() {
        ResultTable::new("x", &["a"]).push(vec![Cell::Missing, Cell::Missing]);
    }
}
