//! Excess-return panels and CSV ingestion.
//!
//! A [`ReturnPanel`] is a validated `T x p` matrix of per-period excess
//! returns (decimal units) together with asset identifiers and a strictly
//! increasing time index. Every constructor rejects malformed input, so any
//! panel handed to an estimator is known to be finite and well-shaped.
//!
//! CSV layout: header row is `date` followed by one column per asset id;
//! every data row starts with its time label.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors raised while building or reading a return panel.
#[derive(Debug, Error)]
pub enum PanelError {
    /// A matrix entry is NaN or infinite.
    #[error("non-finite return at row {row}, column {col}")]
    NonFinite {
        /// Zero-based period index of the offending entry.
        row: usize,
        /// Zero-based asset index of the offending entry.
        col: usize,
    },

    /// Shape of ids / index / matrix disagree.
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        /// What was being checked.
        what: &'static str,
        /// Expected count.
        expected: usize,
        /// Observed count.
        actual: usize,
    },

    /// Time labels are not strictly increasing.
    #[error("time index not strictly increasing at position {position} ({prev:?} >= {next:?})")]
    UnorderedIndex {
        /// Position of the first out-of-order label.
        position: usize,
        /// Label before the violation.
        prev: String,
        /// Offending label.
        next: String,
    },

    /// Panel too small for any estimator (needs T >= 2 and p >= 2).
    #[error("panel too small: {periods} periods x {assets} assets (need at least 2 x 2)")]
    TooSmall {
        /// Number of periods found.
        periods: usize,
        /// Number of assets found.
        assets: usize,
    },

    /// A CSV cell failed to parse as a number.
    #[error("could not parse return at row {row}, column {col}: {message}")]
    Parse {
        /// Zero-based data-row index.
        row: usize,
        /// Zero-based asset-column index.
        col: usize,
        /// Parser message.
        message: String,
    },

    /// Underlying CSV error.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Underlying I/O error.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A validated panel of excess returns.
///
/// Stored dense as a `T x p` matrix: row `t` holds the cross-section of
/// returns at period `t`. Immutable after construction and safe to share
/// across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    values: DMatrix<f64>,
    asset_ids: Vec<String>,
    time_index: Vec<String>,
}

impl ReturnPanel {
    /// Build a panel, checking every invariant.
    ///
    /// Rejects non-finite entries (with their location), id/index length
    /// mismatches, non-increasing time labels and panels smaller than 2 x 2.
    pub fn new(
        values: DMatrix<f64>,
        asset_ids: Vec<String>,
        time_index: Vec<String>,
    ) -> Result<Self, PanelError> {
        let (t, p) = values.shape();
        if t < 2 || p < 2 {
            return Err(PanelError::TooSmall {
                periods: t,
                assets: p,
            });
        }
        if asset_ids.len() != p {
            return Err(PanelError::DimensionMismatch {
                what: "asset ids",
                expected: p,
                actual: asset_ids.len(),
            });
        }
        if time_index.len() != t {
            return Err(PanelError::DimensionMismatch {
                what: "time index",
                expected: t,
                actual: time_index.len(),
            });
        }
        for row in 0..t {
            for col in 0..p {
                if !values[(row, col)].is_finite() {
                    return Err(PanelError::NonFinite { row, col });
                }
            }
        }
        for i in 1..t {
            if time_index[i - 1] >= time_index[i] {
                return Err(PanelError::UnorderedIndex {
                    position: i,
                    prev: time_index[i - 1].clone(),
                    next: time_index[i].clone(),
                });
            }
        }
        Ok(Self {
            values,
            asset_ids,
            time_index,
        })
    }

    /// Number of periods `T`.
    pub fn num_periods(&self) -> usize {
        self.values.nrows()
    }

    /// Number of assets `p`.
    pub fn num_assets(&self) -> usize {
        self.values.ncols()
    }

    /// The underlying `T x p` return matrix.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Asset identifiers, one per column.
    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    /// Time labels, one per row, strictly increasing.
    pub fn time_index(&self) -> &[String] {
        &self.time_index
    }

    /// The cross-section at period `t` as a column vector.
    pub fn row_vec(&self, t: usize) -> DVector<f64> {
        self.values.row(t).transpose()
    }

    /// A contiguous sub-panel of `len` periods starting at row `start`.
    pub fn window(&self, start: usize, len: usize) -> Result<ReturnPanel, PanelError> {
        if start + len > self.num_periods() {
            return Err(PanelError::DimensionMismatch {
                what: "window bounds",
                expected: self.num_periods(),
                actual: start + len,
            });
        }
        ReturnPanel::new(
            self.values.rows(start, len).into_owned(),
            self.asset_ids.clone(),
            self.time_index[start..start + len].to_vec(),
        )
    }

    /// Read a panel from CSV: header `date,<id>,...`, one row per period.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, PanelError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 {
            return Err(PanelError::TooSmall {
                periods: 0,
                assets: headers.len().saturating_sub(1),
            });
        }
        let asset_ids: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
        let p = asset_ids.len();

        let mut time_index = Vec::new();
        let mut data: Vec<f64> = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != p + 1 {
                return Err(PanelError::DimensionMismatch {
                    what: "csv row width",
                    expected: p + 1,
                    actual: record.len(),
                });
            }
            time_index.push(record[0].to_owned());
            for col in 0..p {
                let cell = &record[col + 1];
                let v: f64 = cell.parse().map_err(|e| PanelError::Parse {
                    row,
                    col,
                    message: format!("{e} (value {cell:?})"),
                })?;
                data.push(v);
            }
        }
        let t = time_index.len();
        let values = DMatrix::from_row_iterator(t, p, data);
        ReturnPanel::new(values, asset_ids, time_index)
    }

    /// Read a panel from a CSV file on disk.
    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self, PanelError> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Write the panel as CSV. Floats are written in shortest round-trip
    /// form, so read-back reproduces every entry bit-exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PanelError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_owned()];
        header.extend(self.asset_ids.iter().cloned());
        wtr.write_record(&header)?;
        for t in 0..self.num_periods() {
            let mut row = vec![self.time_index[t].clone()];
            for c in 0..self.num_assets() {
                row.push(format!("{}", self.values[(t, c)]));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Write the panel to a CSV file on disk.
    pub fn to_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<(), PanelError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}
