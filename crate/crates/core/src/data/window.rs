//! Sliding windows of `t` past steps and `k` future steps.

use serde::{Deserialize, Serialize};

use super::regular::RegularSeries;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub defect_id: String,
    /// Index of the first window step in the series.
    pub start: usize,
    pub past_x: Vec<Vec<f64>>,
    pub past_y: Vec<f64>,
    pub past_interpolated: Vec<bool>,
    pub past_mask: Vec<bool>,
    pub future_x: Vec<Vec<f64>>,
    pub future_y: Vec<f64>,
    pub future_mask: Vec<bool>,
    /// Number of real (unpadded) future steps.
    pub n_valid: usize,
    pub last_measured_value: f64,
    /// Leak-free length of the step just before the window, used to rebuild
    /// the first past speed after replacement.
    pub preceding_length: Option<f64>,
}

impl WindowSample {
    pub fn past_len(&self) -> usize {
        self.past_y.len()
    }

    pub fn future_len(&self) -> usize {
        self.future_y.len()
    }
}

/// Window start positions for a series of `len` steps.
///
/// Series at least `t + k` long yield every full window. Shorter series
/// that still have one future step yield a single window anchored at the
/// start, zero-padded at the end.
pub fn window_starts(len: usize, past: usize, future: usize) -> Vec<usize> {
    if future == 0 || len < past + 1 {
        return Vec::new();
    }
    if len >= past + future {
        (0..=len - past - future).collect()
    } else {
        vec![0]
    }
}

/// Cuts `series` into windows. In the returned samples `past_y` still holds
/// the raw grid values; see [`apply_last_measured_replacement`].
///
/// `speed_channel` is zeroed in every future row, since speed is derived
/// from the lengths being forecast.
pub fn make_windows(
    series: &RegularSeries,
    past: usize,
    future: usize,
    speed_channel: Option<usize>,
) -> Result<Vec<WindowSample>> {
    if future == 0 {
        return Err(Error::config("future horizon must be at least 1"));
    }
    if !series.features.is_empty() && series.features.len() != series.len() {
        return Err(Error::input(format!(
            "series {} has {} feature rows for {} steps",
            series.defect_id,
            series.features.len(),
            series.len()
        )));
    }
    let n_features = series.features.first().map_or(0, Vec::len);
    let row = |j: usize| -> Vec<f64> {
        series
            .features
            .get(j)
            .cloned()
            .unwrap_or_default()
    };

    let mut out = Vec::new();
    for start in window_starts(series.len(), past, future) {
        let end = start + past; // first future index
        let anchor = if past > 0 { end - 1 } else { start.saturating_sub(1) };
        let last_idx = series.last_measured_at_or_before(anchor);
        let last_measured_value = series.length_mm[last_idx];
        let preceding_length = (start > 0).then(|| {
            if start - 1 > last_idx {
                last_measured_value
            } else {
                series.length_mm[start - 1]
            }
        });

        let mut future_x = Vec::with_capacity(future);
        let mut future_y = Vec::with_capacity(future);
        let mut future_mask = Vec::with_capacity(future);
        for j in end..end + future {
            if j < series.len() {
                let mut r = row(j);
                if let Some(c) = speed_channel.filter(|&c| c < r.len()) {
                    r[c] = 0.0;
                }
                future_x.push(r);
                future_y.push(series.length_mm[j]);
                future_mask.push(true);
            } else {
                future_x.push(vec![0.0; n_features]);
                future_y.push(0.0);
                future_mask.push(false);
            }
        }
        let n_valid = future_mask.iter().filter(|&&m| m).count();
        out.push(WindowSample {
            defect_id: series.defect_id.clone(),
            start,
            past_x: (start..end).map(row).collect(),
            past_y: series.length_mm[start..end].to_vec(),
            past_interpolated: series.is_interpolated[start..end].to_vec(),
            past_mask: vec![true; past],
            future_x,
            future_y,
            future_mask,
            n_valid,
            last_measured_value,
            preceding_length,
        });
    }
    Ok(out)
}

/// Replaces every interpolated value after the last measured one by
/// `last_measured`. Interpolated values before it are kept. When no value
/// in the slice is measured, every interpolated value is replaced.
pub fn replace_after_last_measured(
    values: &[f64],
    interpolated: &[bool],
    last_measured: f64,
) -> Vec<f64> {
    let cut = interpolated.iter().rposition(|&i| !i).map_or(0, |p| p + 1);
    values
        .iter()
        .zip(interpolated)
        .enumerate()
        .map(|(j, (&v, &interp))| if j >= cut && interp { last_measured } else { v })
        .collect()
}

/// Applies the leak-free replacement to `past_y` and rebuilds the past
/// speed channel from the replaced values.
pub fn apply_last_measured_replacement(
    sample: &WindowSample,
    speed_channel: Option<usize>,
) -> WindowSample {
    let mut out = sample.clone();
    out.past_y = replace_after_last_measured(
        &sample.past_y,
        &sample.past_interpolated,
        sample.last_measured_value,
    );
    if let Some(c) = speed_channel {
        for j in 0..out.past_x.len() {
            let prev = if j == 0 {
                sample.preceding_length
            } else {
                Some(out.past_y[j - 1])
            };
            if let Some(cell) = out.past_x[j].get_mut(c) {
                *cell = prev.map_or(0.0, |p| out.past_y[j] - p);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(len: usize) -> RegularSeries {
        RegularSeries {
            defect_id: "s".into(),
            grid: vec![],
            length_mm: (0..len).map(|i| 10.0 + i as f64).collect(),
            is_interpolated: (0..len).map(|i| i % 2 == 1).collect(),
            steps_since_last_measurement: vec![],
            elapsed_months: vec![],
            propagation_speed: vec![],
            features: (0..len).map(|i| vec![i as f64, 1.0]).collect(),
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&series(9), 5, 4, None).unwrap().len(), 1);
        assert_eq!(make_windows(&series(12), 5, 4, None).unwrap().len(), 4);
        assert_eq!(make_windows(&series(4), 5, 4, None).unwrap().len(), 0);
        // feature-only mode: length-4 windows with no past
        let w = make_windows(&series(6), 0, 4, Some(1)).unwrap();
        assert_eq!(w.len(), 3);
        assert!(w.iter().all(|s| s.past_len() == 0 && s.future_len() == 4));
    }

    #[test]
    fn short_series_padded_at_end() {
        let w = make_windows(&series(7), 5, 4, Some(1)).unwrap();
        assert_eq!(w.len(), 1);
        let s = &w[0];
        assert_eq!(s.future_mask, vec![true, true, false, false]);
        assert_eq!(s.n_valid, 2);
        assert_eq!(&s.future_y[2..], &[0.0, 0.0]);
        assert_eq!(s.future_x[3], vec![0.0, 0.0]);
        // speed channel is zeroed in the future
        assert!(s.future_x.iter().all(|r| r[1] == 0.0));
        assert!(s.past_x.iter().all(|r| r[1] == 1.0));
    }

    #[test]
    fn table_one_replacement() {
        let out = replace_after_last_measured(
            &[30.0, 32.5, 35.0, 35.0, 38.125],
            &[false, true, false, false, true],
            35.0,
        );
        assert_eq!(out, vec![30.0, 32.5, 35.0, 35.0, 35.0]);
    }

    #[test]
    fn replacement_edge_cases() {
        let measured = [1.0, 2.0, 3.0];
        assert_eq!(
            replace_after_last_measured(&measured, &[false; 3], 9.0),
            measured.to_vec()
        );
        assert_eq!(
            replace_after_last_measured(&[10.0, 12.0, 14.0], &[false, true, true], 10.0),
            vec![10.0, 10.0, 10.0]
        );
        // nothing measured inside the window
        assert_eq!(
            replace_after_last_measured(&[10.0, 12.0], &[true, true], 8.0),
            vec![8.0, 8.0]
        );
    }

    #[test]
    fn replacement_rebuilds_speed() {
        let mut s = series(9);
        // steps 0..=2 measured, then interpolated through the past
        s.is_interpolated = vec![false, false, false, true, true, false, true, true, false];
        let w = &make_windows(&s, 5, 4, Some(1)).unwrap()[0];
        assert_eq!(w.last_measured_value, 12.0);
        let r = apply_last_measured_replacement(w, Some(1));
        assert_eq!(r.past_y, vec![10.0, 11.0, 12.0, 12.0, 12.0]);
        let speeds: Vec<f64> = r.past_x.iter().map(|row| row[1]).collect();
        assert_eq!(speeds, vec![0.0, 1.0, 1.0, 0.0, 0.0]);
    }
}
