//! Report envelope and file emission.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::args::Format;
use crate::config::RunConfig;
use crate::error::CliError;

pub const SCHEMA: u32 = 1;

/// One CSV cell; floats print in shortest round-trip form.
#[derive(Debug, Clone)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format!("{v}"),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    /// File stem suffix; the main table of a command has none.
    pub suffix: Option<&'static str>,
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(suffix: Option<&'static str>, header: &'static [&'static str]) -> Self {
        Table {
            suffix,
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        w.into_inner().map_err(|e| CliError::Io(e.to_string()))
    }

    fn file_name(&self, command: &str) -> String {
        match self.suffix {
            Some(s) => format!("{command}-{s}.csv"),
            None => format!("{command}.csv"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub quantity: String,
    pub anchor: String,
}

/// Command output before it is wrapped in an envelope.
#[derive(Debug, Default)]
pub struct Outcome {
    pub results: Value,
    pub tables: Vec<Table>,
    pub provenance: Vec<Provenance>,
    /// Gnuplot script body, referencing the CSV files by name.
    pub plot: Option<String>,
}

impl Outcome {
    pub fn new(results: Value) -> Self {
        Outcome {
            results,
            ..Default::default()
        }
    }

    pub fn anchor(&mut self, quantity: &str, anchor: &str) {
        self.provenance.push(Provenance {
            quantity: quantity.into(),
            anchor: anchor.into(),
        });
    }
}

#[derive(Debug, Serialize)]
pub struct Envelope<'a> {
    pub schema: u32,
    pub tool_version: &'static str,
    pub config_echo: &'a RunConfig,
    pub results: &'a Value,
    pub provenance: &'a [Provenance],
}

pub fn envelope_json(config: &RunConfig, outcome: &Outcome) -> String {
    let env = Envelope {
        schema: SCHEMA,
        tool_version: env!("CARGO_PKG_VERSION"),
        config_echo: config,
        results: &outcome.results,
        provenance: &outcome.provenance,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("envelope serializes");
    s.push('\n');
    s
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Writes the envelope and tables under `config.output_dir`, or prints the
/// envelope when there is none.
pub fn write_report(config: &RunConfig, outcome: &Outcome, plot: bool) -> Result<(), CliError> {
    let json = envelope_json(config, outcome);
    let Some(dir) = &config.output_dir else {
        print!("{json}");
        return Ok(());
    };
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let command = config.command.as_str();
    // the envelope is always written
    write(&dir.join(format!("{command}.json")), json.as_bytes())?;
    if config.format != Format::Json {
        for table in &outcome.tables {
            write(&dir.join(table.file_name(command)), &table.to_csv()?)?;
        }
    }
    if plot {
        if let Some(script) = &outcome.plot {
            write(&dir.join(format!("{command}.gp")), script.as_bytes())?;
        }
    }
    Ok(())
}
