//! Resampling of irregular visits onto a 3-month grid, anomaly filtering and
//! per-step feature extraction.

use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};

use super::record::{IrregularDefectSeries, RejectReason};
use super::schema::FeatureSchema;

pub const GRID_STEP_MONTHS: u32 = 3;
pub const MAX_STEPS: usize = 59;
pub const MAX_FALL_MM: f64 = 15.0;
/// Mean Gregorian month, for elapsed-time features.
pub const DAYS_PER_MONTH: f64 = 365.2425 / 12.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularSeries {
    pub defect_id: String,
    pub grid: Vec<NaiveDate>,
    pub length_mm: Vec<f64>,
    pub is_interpolated: Vec<bool>,
    #[serde(default)]
    pub steps_since_last_measurement: Vec<u32>,
    #[serde(default)]
    pub elapsed_months: Vec<f64>,
    #[serde(default)]
    pub propagation_speed: Vec<f64>,
    /// `steps × F` exogenous matrix, filled by [`extract_features`].
    #[serde(default)]
    pub features: Vec<Vec<f64>>,
}

impl RegularSeries {
    pub fn len(&self) -> usize {
        self.length_mm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.length_mm.is_empty()
    }

    /// Index of the last measured step at or before `index`. Step 0 is always
    /// measured because the grid is anchored on the first visit.
    pub fn last_measured_at_or_before(&self, index: usize) -> usize {
        (0..=index.min(self.len() - 1))
            .rev()
            .find(|&j| !self.is_interpolated[j])
            .unwrap_or(0)
    }
}

pub fn grid_date(anchor: NaiveDate, step: usize) -> Option<NaiveDate> {
    anchor.checked_add_months(Months::new(GRID_STEP_MONTHS * step as u32))
}

/// Linearly interpolates the visits at every grid date.
///
/// The grid starts on the first visit and never extends past the last one;
/// a step is flagged measured only when a visit falls exactly on its date.
pub fn regularize(series: &IrregularDefectSeries) -> Result<RegularSeries, RejectReason> {
    regularize_with_limit(series, MAX_STEPS)
}

pub fn regularize_with_limit(
    series: &IrregularDefectSeries,
    max_steps: usize,
) -> Result<RegularSeries, RejectReason> {
    series.validate()?;
    let anchor = series.visits[0].date;
    let last = series.visits.last().expect("validated").date;
    let days: Vec<i64> = series
        .visits
        .iter()
        .map(|v| (v.date - anchor).num_days())
        .collect();

    let mut out = RegularSeries {
        defect_id: series.defect_id.clone(),
        grid: Vec::new(),
        length_mm: Vec::new(),
        is_interpolated: Vec::new(),
        steps_since_last_measurement: Vec::new(),
        elapsed_months: Vec::new(),
        propagation_speed: Vec::new(),
        features: Vec::new(),
    };
    for step in 0..max_steps {
        let Some(date) = grid_date(anchor, step) else { break };
        if date > last {
            break;
        }
        let x = (date - anchor).num_days();
        // first visit strictly after x; x lies within [days[0], days[last]]
        let hi = days.partition_point(|&d| d <= x);
        let lo = hi - 1;
        let (value, interpolated) = if days[lo] == x {
            (series.visits[lo].length_mm, false)
        } else {
            let (x0, x1) = (days[lo] as f64, days[hi] as f64);
            let (y0, y1) = (series.visits[lo].length_mm, series.visits[hi].length_mm);
            (y0 + (y1 - y0) * (x as f64 - x0) / (x1 - x0), true)
        };
        out.grid.push(date);
        out.length_mm.push(value);
        out.is_interpolated.push(interpolated);
    }
    Ok(out)
}

/// Rejects a series whose length falls by more than 15 mm between
/// consecutive steps; smaller drops are kept as they are.
pub fn filter_anomalies(series: &RegularSeries) -> Result<(), RejectReason> {
    filter_anomalies_with(series, MAX_FALL_MM)
}

pub fn filter_anomalies_with(series: &RegularSeries, max_fall_mm: f64) -> Result<(), RejectReason> {
    for (j, w) in series.length_mm.windows(2).enumerate() {
        let drop = w[0] - w[1];
        if drop > max_fall_mm {
            return Err(RejectReason::LargeFall {
                step: j + 1,
                drop_mm: drop,
            });
        }
    }
    Ok(())
}

/// First differences per grid step, with 0 at the first step.
pub fn propagation_speed(lengths: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(lengths.len());
    for j in 0..lengths.len() {
        out.push(if j == 0 { 0.0 } else { lengths[j] - lengths[j - 1] });
    }
    out
}

pub fn steps_since_last_measurement(is_interpolated: &[bool]) -> Vec<u32> {
    let mut counter = 0;
    is_interpolated
        .iter()
        .map(|&interp| {
            counter = if interp { counter + 1 } else { 0 };
            counter
        })
        .collect()
}

/// Adds elapsed time, speed and interpolation channels and builds the
/// exogenous feature matrix from the raw record.
///
/// Dynamic values at a grid date are the most recent report at or before
/// that date (the earliest report when none precedes it).
pub fn extract_features(
    series: &mut RegularSeries,
    raw: &IrregularDefectSeries,
    schema: &FeatureSchema,
) {
    series.elapsed_months = series
        .grid
        .iter()
        .map(|d| (*d - raw.discovery_date).num_days() as f64 / DAYS_PER_MONTH)
        .collect();
    series.propagation_speed = propagation_speed(&series.length_mm);
    series.steps_since_last_measurement = steps_since_last_measurement(&series.is_interpolated);

    let static_row = schema.static_row(&raw.static_features);
    let mut dynamic = raw.dynamic_features.clone();
    dynamic.sort_by_key(|r| r.date);
    let empty = Default::default();

    series.features = (0..series.len())
        .map(|j| {
            let date = series.grid[j];
            let idx = dynamic.partition_point(|r| r.date <= date);
            let values = match idx {
                0 => dynamic.first().map_or(&empty, |r| &r.values),
                i => &dynamic[i - 1].values,
            };
            let mut row = static_row.clone();
            row.extend(schema.dynamic_row(values));
            row.push(series.elapsed_months[j]);
            row.push(f64::from(u8::from(series.is_interpolated[j])));
            row.push(f64::from(series.steps_since_last_measurement[j]));
            row.push(series.propagation_speed[j]);
            row
        })
        .collect();
}
