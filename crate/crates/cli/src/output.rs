use std::io::Write;

use clap::ValueEnum;
use serde::Deserialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    #[default]
    Table,
    Csv,
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Table {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn render_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&self.headers);
        out.push('\n');
        out.push_str(&line(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>()));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }

    fn render_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::internal(format!("writing CSV: {e}"));
        w.write_record(&self.headers).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::internal(format!("writing CSV: {e}")))?;
        String::from_utf8(bytes).map_err(|e| CliError::internal(e.to_string()))
    }
}

/// What a subcommand prints: machine JSON plus a table for people.
#[derive(Debug, Clone)]
pub struct Report {
    pub json: Value,
    pub table: Table,
}

impl Report {
    pub fn render(&self, format: Format) -> CliResult<String> {
        match format {
            Format::Json => serde_json::to_string_pretty(&self.json)
                .map(|s| s + "\n")
                .map_err(|e| CliError::internal(e.to_string())),
            Format::Table => Ok(self.table.render_text()),
            Format::Csv => self.table.render_csv(),
        }
    }

    pub fn emit(&self, format: Format) -> CliResult<()> {
        let text = self.render(format)?;
        let mut out = std::io::stdout().lock();
        out.write_all(text.as_bytes())?;
        out.flush()?;
        Ok(())
    }
}

pub fn fixed(v: f64, digits: usize) -> String {
    format!("{v:.digits$}")
}
