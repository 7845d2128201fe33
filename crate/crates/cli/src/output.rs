//! Plot-ready CSV tables.
//!
//! Every table starts with a `# schema: pcvqkd/<name>/v<k>` line so that
//! readers can reject files whose columns they do not understand. Bump the
//! version whenever a header changes.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use pcvqkd::format_decimal;

/// One CSV cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    /// Fixed label; must not contain commas or newlines.
    Text(&'static str),
    /// Field not computed for this row (written empty).
    Missing,
}

impl Cell {
    fn render(self, out: &mut String) {
        match self {
            // Adding +0 folds -0 into 0, so grids starting at "0 dB" stay unsigned.
            Cell::Num(v) => out.push_str(&format_decimal(v + 0.0)),
            Cell::Int(v) => {
                let _ = write!(out, "{v}");
            }
            Cell::Bool(v) => out.push_str(if v { "true" } else { "false" }),
            Cell::Text(v) => out.push_str(v),
            Cell::Missing => {}
        }
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

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub schema: &'static str,
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(schema: &'static str, header: &'static [&'static str]) -> Self {
        Self {
            schema,
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "{}", self.schema);
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = format!("# schema: pcvqkd/{}\n{}\n", self.schema, self.header.join(","));
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                cell.render(&mut out);
            }
            out.push('\n');
        }
        out
    }
}

/// Where a table goes: a file, or standard output when no path is given.
#[derive(Debug, Clone, PartialEq)]
pub enum Sink {
    Stdout,
    File(PathBuf),
}

impl Sink {
    pub fn from_path(path: Option<PathBuf>) -> Self {
        path.map_or(Sink::Stdout, Sink::File)
    }

    pub fn path(&self) -> Option<&Path> {
        match self {
            Sink::Stdout => None,
            Sink::File(p) => Some(p),
        }
    }

    /// Streams through `body`; files are written via a buffered handle.
    pub fn write_with(&self, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
        match self {
            Sink::Stdout => {
                let stdout = io::stdout();
                let mut lock = io::BufWriter::new(stdout.lock());
                body(&mut lock)?;
                lock.flush()
            }
            Sink::File(path) => {
                let mut file = io::BufWriter::new(fs::File::create(path)?);
                body(&mut file)?;
                file.flush()
            }
        }
    }

    pub fn write_table(&self, table: &Table) -> io::Result<()> {
        self.write_with(|w| w.write_all(table.render().as_bytes()))
    }
}
