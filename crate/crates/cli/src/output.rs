use std::io::Write;

use anyhow::Result;
use clap::ValueEnum;
use serde::Serialize;

use crate::Shared;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Plain lines for reading in a terminal.
    Text,
    Json,
    Csv,
}

/// A rendered result in every supported format.
pub struct Rendered {
    pub text: String,
    pub json: serde_json::Value,
    pub csv: Vec<Vec<String>>,
}

impl Rendered {
    pub fn new(text: String, json: impl Serialize, csv: Vec<Vec<String>>) -> Result<Self> {
        Ok(Self {
            text,
            json: serde_json::to_value(json)?,
            csv,
        })
    }
}

/// Writes to `--out` when given, else stdout.
pub fn emit(shared: &Shared, rendered: Rendered) -> Result<()> {
    let bytes = match shared.format {
        Format::Text => rendered.text.into_bytes(),
        Format::Json => {
            let mut b = serde_json::to_vec_pretty(&rendered.json)?;
            b.push(b'\n');
            b
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &rendered.csv {
                w.write_record(row)?;
            }
            w.into_inner().map_err(|e| anyhow::anyhow!("{}", e.error()))?
        }
    };
    match &shared.out {
        Some(path) => rfeval::harness::write_atomic(path, &bytes)?,
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

/// Shortest round-trip form, always with a decimal point (`0.0`, not `0`).
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn row<I: IntoIterator<Item = S>, S: ToString>(cells: I) -> Vec<String> {
    cells.into_iter().map(|c| c.to_string()).collect()
}
