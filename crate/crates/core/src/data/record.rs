use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub date: NaiveDate,
    pub length_mm: f64,
}

/// Exogenous values reported at one date. Categorical fields are integer
/// codes stored as numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicRecord {
    pub date: NaiveDate,
    #[serde(flatten)]
    pub values: BTreeMap<String, f64>,
}

/// One raw defect as it arrives from the field: irregular visit dates and
/// the exogenous context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrregularDefectSeries {
    pub defect_id: String,
    pub discovery_date: NaiveDate,
    pub visits: Vec<Visit>,
    #[serde(rename = "static", default)]
    pub static_features: BTreeMap<String, f64>,
    #[serde(rename = "dynamic", default)]
    pub dynamic_features: Vec<DynamicRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum RejectReason {
    TooFewVisits { visits: usize },
    NonIncreasingDates { index: usize },
    InvalidLength { index: usize, length_mm: f64 },
    LargeFall { step: usize, drop_mm: f64 },
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::TooFewVisits { .. } => "too_few_visits",
            RejectReason::NonIncreasingDates { .. } => "non_increasing_dates",
            RejectReason::InvalidLength { .. } => "invalid_length",
            RejectReason::LargeFall { .. } => "large_fall",
        }
    }
}

impl IrregularDefectSeries {
    /// Checks the record invariants: at least two visits, strictly
    /// increasing dates, finite non-negative lengths.
    pub fn validate(&self) -> std::result::Result<(), RejectReason> {
        if self.visits.len() < 2 {
            return Err(RejectReason::TooFewVisits {
                visits: self.visits.len(),
            });
        }
        for (i, v) in self.visits.iter().enumerate() {
            if !v.length_mm.is_finite() || v.length_mm < 0.0 {
                return Err(RejectReason::InvalidLength {
                    index: i,
                    length_mm: v.length_mm,
                });
            }
            if i > 0 && v.date <= self.visits[i - 1].date {
                return Err(RejectReason::NonIncreasingDates { index: i });
            }
        }
        Ok(())
    }
}

/// Reads newline-delimited JSON records; blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<IrregularDefectSeries>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            Error::input(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records(path: &Path, records: &[IrregularDefectSeries]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
