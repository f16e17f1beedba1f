//! Tables, their CSV form and the JSON sidecar.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{CliResult, RunConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Float(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Float(v) => v.to_string(),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Float(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
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

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// Per-row outcome, written to the `status` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    /// The estimator's denominator was below its floor.
    Unresolvable,
    /// No slice of the energy search cleared the guaranteed norm.
    NoValidEnergy,
    /// The chain's starting weight was not above the cutoff.
    ColdStart,
    /// The chain flagged low acceptance.
    NotConverged,
    /// A check failed.
    Failed,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Unresolvable => "unresolvable",
            Status::NoValidEnergy => "no_valid_energy",
            Status::ColdStart => "cold_start",
            Status::NotConverged => "not_converged",
            Status::Failed => "failed",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Failed => 1,
            Status::Unresolvable | Status::NoValidEnergy => 2,
            Status::ColdStart | Status::NotConverged => 3,
        }
    }

    fn severity(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Unresolvable | Status::NoValidEnergy => 1,
            Status::ColdStart | Status::NotConverged => 2,
            Status::Failed => 3,
        }
    }
}

/// Column-labelled rows; a `status` column is appended on output.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<(Vec<Cell>, Status)>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, cells: Vec<Cell>, status: Status) {
        debug_assert_eq!(cells.len(), self.header.len(), "row width");
        self.rows.push((cells, status));
    }

    /// Appends the rows of a table with the same header.
    pub fn extend(&mut self, other: Table) {
        if self.header.is_empty() && self.rows.is_empty() {
            *self = other;
            return;
        }
        assert_eq!(self.header, other.header, "tables with different headers");
        self.rows.extend(other.rows);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric values of a column, `None` for empty cells.
    pub fn values(&self, name: &str) -> Vec<Option<f64>> {
        let Some(i) = self.column(name) else {
            return Vec::new();
        };
        self.rows.iter().map(|(r, _)| r[i].as_f64()).collect()
    }

    pub fn status(&self) -> Status {
        self.rows
            .iter()
            .map(|(_, s)| *s)
            .max_by_key(|s| s.severity())
            .unwrap_or(Status::Ok)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut head = self.header.clone();
        head.push("status".into());
        w.write_record(&head)?;
        for (cells, status) in &self.rows {
            let mut rec: Vec<String> = cells.iter().map(Cell::render).collect();
            rec.push(status.name().into());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> CliResult<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }
}

/// A command's table plus free-form notes for the terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table: Table,
    pub notes: Vec<String>,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        self.table.status().exit_code()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: RunConfig,
    pub seed: u64,
    pub version: String,
    pub wall_time_s: f64,
    pub rows: usize,
    pub exit_code: i32,
    pub csv: String,
}

/// `results.csv` → `results.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn write_outputs(path: &Path, config: &RunConfig, report: &Report, wall_time_s: f64) -> CliResult<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    report.table.write_csv(std::fs::File::create(path)?)?;
    let sidecar = Sidecar {
        config: config.clone(),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s,
        rows: report.table.rows.len(),
        exit_code: report.exit_code(),
        csv: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
    };
    let side = sidecar_path(path);
    std::fs::write(&side, serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(side)
}

pub fn read_sidecar(path: &Path) -> CliResult<Sidecar> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
