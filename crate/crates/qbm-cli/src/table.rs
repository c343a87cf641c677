//! Fixed-format CSV: a `#` provenance line, a header row, then rows with
//! every number at 12 significant digits and `\n` line endings.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;

/// A cell is a number, an empty slot or a label.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Empty,
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        // one spelling for both signed zeros
        return "0.00000000000e0".into();
    }
    format!("{x:.11e}")
}

#[derive(Debug, Clone)]
pub struct Table {
    pub provenance: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(provenance: String, header: Vec<String>) -> Self {
        Self {
            provenance,
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.provenance.replace('\n', " "));
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(x) => format_number(*x),
                    Cell::Empty => String::new(),
                    Cell::Text(s) => s.clone(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.render())
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

/// Columns read back from a CSV written by [`Table`]; empty or non-numeric
/// cells become `None`.
#[derive(Debug, Clone)]
pub struct ParsedCsv {
    pub header: Vec<String>,
    pub columns: Vec<Vec<Option<f64>>>,
}

pub fn parse_csv(text: &str) -> Result<ParsedCsv, CliError> {
    let mut lines = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<String> = match lines.next() {
        Some(h) => h.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(CliError::Usage("CSV has no header row".into())),
    };
    let mut columns = vec![Vec::new(); header.len()];
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(CliError::Usage(format!(
                "CSV row {} has {} cells, header has {}",
                i + 1,
                cells.len(),
                header.len()
            )));
        }
        for (col, cell) in columns.iter_mut().zip(cells) {
            col.push(cell.trim().parse::<f64>().ok());
        }
    }
    if columns.first().is_none_or(|c| c.is_empty()) {
        return Err(CliError::Usage("CSV has no data rows".into()));
    }
    Ok(ParsedCsv { header, columns })
}
