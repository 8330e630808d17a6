//! Per-channel standard scaling fitted on unmasked training steps.

use serde::{Deserialize, Serialize};

use super::window::WindowSample;
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

/// Running statistics over one channel, accumulated in a fixed order.
#[derive(Clone, Default)]
struct Moments {
    values: Vec<f64>,
}

impl Moments {
    fn finish(&self) -> (f64, f64) {
        let n = self.values.len() as f64;
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if lo == hi {
            // constant channel: pin the mean so the transform is exactly 0
            return (lo, STD_FLOOR);
        }
        let mean = self.values.iter().sum::<f64>() / n;
        let var = self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt().max(STD_FLOOR))
    }
}

impl ScalerParams {
    /// Fits on every unmasked past and future step of `samples`.
    pub fn fit(samples: &[WindowSample]) -> Result<Self> {
        let n_features = samples
            .iter()
            .flat_map(|s| s.past_x.iter().chain(&s.future_x))
            .map(Vec::len)
            .next()
            .ok_or_else(|| Error::input("cannot fit a scaler on an empty training split"))?;
        let mut feats = vec![Moments::default(); n_features];
        let mut target = Moments::default();
        for s in samples {
            let past = s.past_x.iter().zip(&s.past_y).zip(&s.past_mask);
            let future = s.future_x.iter().zip(&s.future_y).zip(&s.future_mask);
            for ((row, &y), _) in past.chain(future).filter(|(_, &m)| m) {
                if row.len() != n_features {
                    return Err(Error::input(format!(
                        "sample {} has {} features, expected {n_features}",
                        s.defect_id,
                        row.len()
                    )));
                }
                for (m, &v) in feats.iter_mut().zip(row) {
                    m.values.push(v);
                }
                target.values.push(y);
            }
        }
        if target.values.is_empty() {
            return Err(Error::input("training split has no unmasked steps"));
        }
        let (feature_mean, feature_std) = feats.iter().map(Moments::finish).unzip();
        let (target_mean, target_std) = target.finish();
        Ok(Self {
            feature_mean,
            feature_std,
            target_mean,
            target_std,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_mean.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(&x, (&m, &s))| (x - m) / s)
            .collect()
    }

    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(&z, (&m, &s))| z * s + m)
            .collect()
    }

    pub fn transform_target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn inverse_target(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }

    /// Maps a variance in scaled target units to mm².
    pub fn inverse_variance(&self, v: f64) -> f64 {
        v * self.target_std * self.target_std
    }

    /// Scales features and targets. Masked steps stay at exactly 0.
    pub fn transform(&self, s: &WindowSample) -> WindowSample {
        let rows = |xs: &[Vec<f64>], mask: &[bool]| -> Vec<Vec<f64>> {
            xs.iter()
                .zip(mask)
                .map(|(r, &m)| if m { self.transform_row(r) } else { vec![0.0; r.len()] })
                .collect()
        };
        let ys = |ys: &[f64], mask: &[bool]| -> Vec<f64> {
            ys.iter()
                .zip(mask)
                .map(|(&y, &m)| if m { self.transform_target(y) } else { 0.0 })
                .collect()
        };
        WindowSample {
            past_x: rows(&s.past_x, &s.past_mask),
            past_y: ys(&s.past_y, &s.past_mask),
            future_x: rows(&s.future_x, &s.future_mask),
            future_y: ys(&s.future_y, &s.future_mask),
            last_measured_value: self.transform_target(s.last_measured_value),
            preceding_length: s.preceding_length.map(|p| self.transform_target(p)),
            ..s.clone()
        }
    }

    pub fn inverse(&self, s: &WindowSample) -> WindowSample {
        let rows = |xs: &[Vec<f64>], mask: &[bool]| -> Vec<Vec<f64>> {
            xs.iter()
                .zip(mask)
                .map(|(r, &m)| if m { self.inverse_row(r) } else { vec![0.0; r.len()] })
                .collect()
        };
        let ys = |ys: &[f64], mask: &[bool]| -> Vec<f64> {
            ys.iter()
                .zip(mask)
                .map(|(&y, &m)| if m { self.inverse_target(y) } else { 0.0 })
                .collect()
        };
        WindowSample {
            past_x: rows(&s.past_x, &s.past_mask),
            past_y: ys(&s.past_y, &s.past_mask),
            future_x: rows(&s.future_x, &s.future_mask),
            future_y: ys(&s.future_y, &s.future_mask),
            last_measured_value: self.inverse_target(s.last_measured_value),
            preceding_length: s.preceding_length.map(|p| self.inverse_target(p)),
            ..s.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(rows: Vec<Vec<f64>>, ys: Vec<f64>, mask: Vec<bool>) -> WindowSample {
        let n = ys.iter().zip(&mask).filter(|(_, &m)| m).count();
        WindowSample {
            defect_id: "a".into(),
            start: 0,
            past_x: vec![],
            past_y: vec![],
            past_interpolated: vec![],
            past_mask: vec![],
            future_x: rows,
            future_y: ys,
            future_mask: mask,
            n_valid: n,
            last_measured_value: 0.0,
            preceding_length: None,
        }
    }

    #[test]
    fn two_values_map_to_plus_minus_one() {
        let s = sample(vec![vec![1.0, 5.0], vec![3.0, 5.0]], vec![1.0, 3.0], vec![true, true]);
        let p = ScalerParams::fit(&[s.clone()]).unwrap();
        assert_eq!(p.feature_mean, vec![2.0, 5.0]);
        assert_eq!(p.feature_std, vec![1.0, STD_FLOOR]);
        let t = p.transform(&s);
        assert_eq!(t.future_x, vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(t.future_y, vec![-1.0, 1.0]);
    }

    #[test]
    fn empty_split_is_an_error() {
        assert!(ScalerParams::fit(&[]).is_err());
    }

    #[test]
    fn padded_steps_do_not_move_statistics() {
        let a = sample(vec![vec![1.0], vec![4.0]], vec![2.0, 7.0], vec![true, true]);
        let p1 = ScalerParams::fit(&[a.clone()]).unwrap();
        let mut b = a.clone();
        b.future_x.push(vec![1e6]);
        b.future_y.push(-3e5);
        b.future_mask.push(false);
        let padded_only = sample(vec![vec![9.0], vec![8.0]], vec![1.0, 1.0], vec![true, false]);
        let p2 = ScalerParams::fit(&[b]).unwrap();
        assert_eq!(p1, p2);
        let p3 = ScalerParams::fit(&[a, padded_only]).unwrap();
        assert_ne!(p1, p3);
    }

    proptest! {
        #[test]
        fn round_trip(xs in prop::collection::vec(-1e4f64..1e4, 2..20), probe in -1e5f64..1e5) {
            let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x, x * 0.5 + 3.0]).collect();
            let mask = vec![true; xs.len()];
            let s = sample(rows, xs.clone(), mask);
            let p = ScalerParams::fit(&[s.clone()]).unwrap();
            let back = p.inverse(&p.transform(&s));
            for (r0, r1) in s.future_x.iter().zip(&back.future_x) {
                for (a, b) in r0.iter().zip(r1) {
                    prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
                }
            }
            let z = p.inverse_target(p.transform_target(probe));
            prop_assert!((z - probe).abs() <= 1e-9 * probe.abs().max(1.0));
        }
    }
}
