//! End-to-end preparation: regularize, filter, extract features, split,
//! window and scale.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::{IrregularDefectSeries, RejectReason};
use super::regular::{self, RegularSeries};
use super::scaler::ScalerParams;
use super::schema::{FeatureLayout, FeatureSchema, DEFAULT_CATEGORICAL};
use super::split::{split_by_defect, Split, SplitAssignment};
use super::window::{apply_last_measured_replacement, make_windows, WindowSample};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub categorical: Vec<String>,
    pub max_steps: usize,
    pub max_fall_mm: f64,
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            categorical: DEFAULT_CATEGORICAL.iter().map(|s| s.to_string()).collect(),
            max_steps: regular::MAX_STEPS,
            max_fall_mm: regular::MAX_FALL_MM,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub defect_id: String,
    pub reason: RejectReason,
}

/// Regularized, filtered and featurized series with their split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedDataset {
    pub schema: FeatureSchema,
    pub layout: FeatureLayout,
    pub series: Vec<RegularSeries>,
    pub rejected: Vec<Rejection>,
    pub split: SplitAssignment,
}

pub fn prepare(records: &[IrregularDefectSeries], options: &PipelineOptions) -> Result<PreparedDataset> {
    if records.is_empty() {
        return Err(Error::input("no input records"));
    }
    let schema = FeatureSchema::infer(records, &options.categorical)?;
    let mut series = Vec::new();
    let mut rejected = Vec::new();
    for raw in records {
        let outcome = regular::regularize_with_limit(raw, options.max_steps).and_then(|r| {
            regular::filter_anomalies_with(&r, options.max_fall_mm)?;
            Ok(r)
        });
        match outcome {
            Ok(mut r) => {
                regular::extract_features(&mut r, raw, &schema);
                series.push(r);
            }
            Err(reason) => rejected.push(Rejection {
                defect_id: raw.defect_id.clone(),
                reason,
            }),
        }
    }
    let ids: Vec<&str> = series.iter().map(|s| s.defect_id.as_str()).collect();
    let split = split_by_defect(&ids, options.seed)?;
    Ok(PreparedDataset {
        layout: schema.layout(),
        schema,
        series,
        rejected,
        split,
    })
}

/// Windowed samples per split, in mm, after the last-measured replacement,
/// plus their scaled counterparts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub past: usize,
    pub future: usize,
    pub layout: FeatureLayout,
    pub scaler: ScalerParams,
    pub raw: [Vec<WindowSample>; 3],
    pub scaled: [Vec<WindowSample>; 3],
}

fn slot(split: Split) -> usize {
    match split {
        Split::Train => 0,
        Split::Validation => 1,
        Split::Test => 2,
    }
}

impl WindowedDataset {
    pub fn raw(&self, split: Split) -> &[WindowSample] {
        &self.raw[slot(split)]
    }

    pub fn scaled(&self, split: Split) -> &[WindowSample] {
        &self.scaled[slot(split)]
    }
}

impl PreparedDataset {
    /// Cuts every series into `(past, future)` windows and fits the scaler on
    /// the training windows. `past = 0` gives feature-only windows.
    pub fn windows(&self, past: usize, future: usize) -> Result<WindowedDataset> {
        let speed = Some(self.layout.speed_channel());
        let mut raw: [Vec<WindowSample>; 3] = Default::default();
        for s in &self.series {
            let split = self
                .split
                .get(&s.defect_id)
                .ok_or_else(|| Error::input(format!("defect {} has no split", s.defect_id)))?;
            for w in make_windows(s, past, future, speed)? {
                raw[slot(split)].push(apply_last_measured_replacement(&w, speed));
            }
        }
        for split in Split::ALL {
            if raw[slot(split)].is_empty() {
                return Err(Error::input(format!(
                    "no {split} windows for past {past}, future {future}"
                )));
            }
        }
        let scaler = ScalerParams::fit(&raw[0])?;
        let scaled = raw.clone().map(|v| v.iter().map(|s| scaler.transform(s)).collect());
        Ok(WindowedDataset {
            past,
            future,
            layout: self.layout,
            scaler,
            raw,
            scaled,
        })
    }

    /// One row per grid step: id, split, step, date, length, flags and every
    /// feature channel.
    pub fn write_series_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let mut header = vec![
            "defect_id".to_string(),
            "split".into(),
            "step".into(),
            "date".into(),
            "length_mm".into(),
            "is_interpolated".into(),
        ];
        header.extend(self.schema.channel_names());
        writeln!(w, "{}", header.join(","))?;
        for s in &self.series {
            let split = self.split.get(&s.defect_id).map_or("", Split::as_str);
            for j in 0..s.len() {
                write!(
                    w,
                    "{},{split},{j},{},{},{}",
                    s.defect_id,
                    s.grid[j],
                    s.length_mm[j],
                    u8::from(s.is_interpolated[j])
                )?;
                for v in s.features.get(j).into_iter().flatten() {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
