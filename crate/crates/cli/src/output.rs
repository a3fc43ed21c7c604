use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::Format;

/// Destination of a subcommand's artifact.
pub struct Output {
    pub format: Format,
    pub path: Option<PathBuf>,
}

impl Output {
    fn writer(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.path {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
            )),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    /// Writes `rows` as CSV, or `doc` as pretty JSON, depending on the format.
    pub fn emit<R: Serialize, J: Serialize>(&self, rows: &[R], doc: &J) -> Result<()> {
        match self.format {
            Format::Csv => self.csv(rows),
            Format::Json => self.json(doc),
        }
    }

    pub fn csv<R: Serialize>(&self, rows: &[R]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.writer()?);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn json<J: Serialize>(&self, doc: &J) -> Result<()> {
        let mut w = self.writer()?;
        serde_json::to_writer_pretty(&mut w, doc)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Side-channel summary: stdout when the artifact goes to a file, stderr
    /// otherwise.
    pub fn summary<J: Serialize>(&self, doc: &J) -> Result<()> {
        let text = serde_json::to_string(doc)?;
        if self.path.is_some() {
            println!("{text}");
        } else {
            eprintln!("{text}");
        }
        Ok(())
    }
}

/// Slope for CSV cells: a number, `zero` for an identically zero parameter,
/// `-` when undefined.
pub fn slope_cell(slope: Option<f64>, zero: bool) -> String {
    match (slope, zero) {
        (_, true) => "zero".into(),
        (Some(s), false) => format!("{s:.4}"),
        (None, false) => "-".into(),
    }
}
