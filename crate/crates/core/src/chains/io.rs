use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{BlockRow, RowClassChain, Run};
use crate::error::{Error, Result};

/// Largest chain accepted from a dense CSV matrix.
pub const CSV_MAX_STATES: usize = 64;

/// JSON form of a [`RowClassChain`].
///
/// ```json
/// {"K": 4,
///  "row_classes": [[[2, 2, 0.5]], [[0, 2, 0.5]]],
///  "assignment": [[0, 2], [1, 2]]}
/// ```
///
/// Each row class is a list of `[start, len, mass]` runs (zero-based columns,
/// per-state mass); `assignment` is run-length encoded as `[class, count]`
/// pairs in state order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainFile {
    #[serde(rename = "K")]
    pub k: usize,
    pub row_classes: Vec<Vec<(usize, usize, f64)>>,
    pub assignment: Vec<(usize, usize)>,
}

impl From<&RowClassChain> for ChainFile {
    fn from(chain: &RowClassChain) -> Self {
        let row_classes = chain
            .classes()
            .iter()
            .map(|c| c.runs().iter().map(|r| (r.start, r.len, r.mass)).collect())
            .collect();
        let mut assignment: Vec<(usize, usize)> = Vec::new();
        for &c in chain.assignment() {
            match assignment.last_mut() {
                Some((last, count)) if *last == c => *count += 1,
                _ => assignment.push((c, 1)),
            }
        }
        Self {
            k: chain.num_states(),
            row_classes,
            assignment,
        }
    }
}

impl TryFrom<ChainFile> for RowClassChain {
    type Error = Error;

    fn try_from(file: ChainFile) -> Result<Self> {
        let classes = file
            .row_classes
            .into_iter()
            .map(|runs| {
                BlockRow::new(
                    file.k,
                    runs.into_iter()
                        .map(|(s, l, m)| Run::new(s, l, m))
                        .collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let assignment: Vec<usize> = file
            .assignment
            .into_iter()
            .flat_map(|(c, count)| std::iter::repeat_n(c, count))
            .collect();
        RowClassChain::new(file.k, classes, assignment)
    }
}

impl RowClassChain {
    pub fn to_json_writer<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &ChainFile::from(self))?;
        Ok(())
    }

    pub fn from_json_reader<R: Read>(reader: R) -> Result<Self> {
        let file: ChainFile = serde_json::from_reader(reader)?;
        file.try_into()
    }

    /// Reads a dense headerless CSV matrix (at most [`CSV_MAX_STATES`] rows).
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|field| {
                    field.parse::<f64>().map_err(|e| {
                        Error::InvalidParameter(format!("row {}: `{field}`: {e}", rows.len() + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
            if rows.len() > CSV_MAX_STATES {
                return Err(Error::GuardExceeded(format!(
                    "dense CSV chains are limited to {CSV_MAX_STATES} states"
                )));
            }
        }
        Self::from_dense_rows(&rows)
    }
}
