//! Forecast accuracy (MAE, RMSE) and physical plausibility (MSQNS, MSTNS,
//! MLNS) metrics, with CSV reports.
//!
//! A fall is a strict decrease between two consecutive unmasked predicted
//! steps. MSQNS is the percentage of sequences with at least one fall, MSTNS
//! the percentage of transitions that are falls, and MLNS the mean fall size
//! over falling transitions (0 when there are none).

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParameterStore;
use crate::data::{ScalerParams, WindowSample};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::nn::DropoutSpec;
use crate::rng;
use crate::training::predict_samples;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlMetrics {
    /// Per-step MAE; `None` when a step has no unmasked entry.
    pub mae: Vec<Option<f64>>,
    pub rmse: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    /// Count-weighted means of the per-step values.
    pub mean_mae: f64,
    pub mean_rmse: f64,
}

fn check_aligned(a: &[Vec<f64>], b: &[Vec<f64>], masks: &[Vec<bool>]) -> Result<usize> {
    if a.len() != b.len() || a.len() != masks.len() {
        return Err(Error::input("metric inputs have different sample counts"));
    }
    let k = masks.first().map_or(0, Vec::len);
    for ((x, y), m) in a.iter().zip(b).zip(masks) {
        if x.len() != k || y.len() != k || m.len() != k {
            return Err(Error::input("metric inputs have different horizons"));
        }
    }
    Ok(k)
}

pub fn ml_metrics(y_hat: &[Vec<f64>], y: &[Vec<f64>], masks: &[Vec<bool>]) -> Result<MlMetrics> {
    let k = check_aligned(y_hat, y, masks)?;
    let mut abs = vec![0.0; k];
    let mut sq = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for ((p, t), m) in y_hat.iter().zip(y).zip(masks) {
        for j in (0..k).filter(|&j| m[j]) {
            let e = p[j] - t[j];
            abs[j] += e.abs();
            sq[j] += e * e;
            counts[j] += 1;
        }
    }
    let per_step = |acc: &[f64], f: fn(f64) -> f64| -> Vec<Option<f64>> {
        acc.iter()
            .zip(&counts)
            .map(|(&s, &n)| (n > 0).then(|| f(s / n as f64)))
            .collect()
    };
    let mae = per_step(&abs, |v| v);
    let rmse = per_step(&sq, f64::sqrt);
    let total: usize = counts.iter().sum();
    let weighted = |v: &[Option<f64>]| -> f64 {
        if total == 0 {
            return 0.0;
        }
        v.iter()
            .zip(&counts)
            .filter_map(|(x, &n)| x.map(|x| x * n as f64))
            .sum::<f64>()
            / total as f64
    };
    Ok(MlMetrics {
        mean_mae: weighted(&mae),
        mean_rmse: weighted(&rmse),
        mae,
        rmse,
        counts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalMetrics {
    pub msqns: f64,
    pub mstns: f64,
    pub mlns: f64,
}

/// Physical metrics over the predicted horizon. With `boundary`, the
/// transition from each sequence's last observed length to its first
/// prediction is counted too.
pub fn physical_metrics(y_hat: &[Vec<f64>], masks: &[Vec<bool>], boundary: Option<&[f64]>) -> Result<PhysicalMetrics> {
    if y_hat.len() != masks.len() || boundary.is_some_and(|b| b.len() != y_hat.len()) {
        return Err(Error::input("metric inputs have different sample counts"));
    }
    let (mut falling_seqs, mut transitions, mut falls, mut fall_sum) = (0usize, 0usize, 0usize, 0.0);
    for (i, (p, m)) in y_hat.iter().zip(masks).enumerate() {
        if p.len() != m.len() {
            return Err(Error::input("prediction and mask lengths differ"));
        }
        let mut steps: Vec<f64> = Vec::with_capacity(p.len() + 1);
        if let Some(b) = boundary {
            steps.push(b[i]);
        }
        let mut any = false;
        let mut prev: Option<f64> = steps.first().copied();
        for (&v, &ok) in p.iter().zip(m) {
            if !ok {
                prev = None;
                continue;
            }
            if let Some(u) = prev {
                transitions += 1;
                if v < u {
                    falls += 1;
                    fall_sum += u - v;
                    any = true;
                }
            }
            prev = Some(v);
        }
        falling_seqs += usize::from(any);
    }
    let pct = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
    Ok(PhysicalMetrics {
        msqns: pct(falling_seqs, y_hat.len()),
        mstns: pct(falls, transitions),
        mlns: if falls == 0 { 0.0 } else { fall_sum / falls as f64 },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub past: usize,
    pub n_samples: usize,
    pub mae: Vec<Option<f64>>,
    pub rmse: Vec<Option<f64>>,
    pub mean_mae: f64,
    pub mean_rmse: f64,
    pub msqns: f64,
    pub mstns: f64,
    pub mlns: f64,
}

impl EvalReport {
    pub fn from_predictions(
        model: &str,
        past: usize,
        y_hat: &[Vec<f64>],
        y: &[Vec<f64>],
        masks: &[Vec<bool>],
    ) -> Result<Self> {
        let ml = ml_metrics(y_hat, y, masks)?;
        let ph = physical_metrics(y_hat, masks, None)?;
        Ok(Self {
            model: model.to_string(),
            past,
            n_samples: y_hat.len(),
            mae: ml.mae,
            rmse: ml.rmse,
            mean_mae: ml.mean_mae,
            mean_rmse: ml.mean_rmse,
            msqns: ph.msqns,
            mstns: ph.mstns,
            mlns: ph.mlns,
        })
    }

    pub fn mae_first(&self) -> Option<f64> {
        self.mae.first().copied().flatten()
    }

    pub fn rmse_first(&self) -> Option<f64> {
        self.rmse.first().copied().flatten()
    }
}

/// Predictions of `model` on `scaled` windows, in mm, aligned with `raw`.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub y_hat: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
    pub defect_ids: Vec<String>,
}

pub fn predict_mm(
    model: &Model,
    store: &ParameterStore,
    scaler: &ScalerParams,
    raw: &[WindowSample],
    scaled: &[WindowSample],
) -> Result<Predictions> {
    if raw.len() != scaled.len() {
        return Err(Error::input("raw and scaled samples are not aligned"));
    }
    let mut r = rng::stream(0, rng::DROPOUT, 0);
    let (y_hat, _) = predict_samples(model, store, scaled, DropoutSpec::off(), &mut r)?;
    Ok(Predictions {
        y_hat: y_hat
            .iter()
            .map(|row| row.iter().map(|&v| scaler.inverse_target(v)).collect())
            .collect(),
        y: raw.iter().map(|s| s.future_y.clone()).collect(),
        masks: raw.iter().map(|s| s.future_mask.clone()).collect(),
        defect_ids: raw.iter().map(|s| s.defect_id.clone()).collect(),
    })
}

pub fn evaluate_model(
    model: &Model,
    store: &ParameterStore,
    scaler: &ScalerParams,
    raw: &[WindowSample],
    scaled: &[WindowSample],
) -> Result<(EvalReport, Predictions)> {
    let p = predict_mm(model, store, scaler, raw, scaled)?;
    let report = EvalReport::from_predictions(model.spec.kind.as_str(), model.spec.past, &p.y_hat, &p.y, &p.masks)?;
    Ok((report, p))
}

const FIXED_COLUMNS: [&str; 10] = [
    "model",
    "past",
    "n_samples",
    "mae_1",
    "mean_mae",
    "rmse_1",
    "mean_rmse",
    "mlns",
    "msqns",
    "mstns",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// CSV text, one row per report. Floats use the shortest representation
/// that parses back to the same value.
pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let k = reports.iter().map(|r| r.mae.len()).max().unwrap_or(0);
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((1..=k).map(|j| format!("mae_step{j}")));
    header.extend((1..=k).map(|j| format!("rmse_step{j}")));
    let mut out = header.join(",");
    out.push('\n');
    for r in reports {
        let mut cells = vec![
            r.model.clone(),
            r.past.to_string(),
            r.n_samples.to_string(),
            opt(r.mae_first()),
            r.mean_mae.to_string(),
            opt(r.rmse_first()),
            r.mean_rmse.to_string(),
            r.mlns.to_string(),
            r.msqns.to_string(),
            r.mstns.to_string(),
        ];
        for v in [&r.mae, &r.rmse] {
            cells.extend((0..k).map(|j| opt(v.get(j).copied().flatten())));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn parse_f64(s: &str, col: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::input(format!("column {col}: cannot parse `{s}`")))
}

pub fn reports_from_csv(text: &str) -> Result<Vec<EvalReport>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::input("empty metrics file"))?
        .split(',')
        .collect();
    if header.len() < FIXED_COLUMNS.len() || header[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
        return Err(Error::input("unexpected metrics header"));
    }
    let k = (header.len() - FIXED_COLUMNS.len()) / 2;
    let mut out = Vec::new();
    for line in lines {
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != header.len() {
            return Err(Error::input(format!("row has {} cells, expected {}", c.len(), header.len())));
        }
        let optional = |s: &str, col: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f64(s, col).map(Some)
            }
        };
        let base = FIXED_COLUMNS.len();
        let mut mae: Vec<Option<f64>> = (0..k).map(|j| optional(c[base + j], header[base + j])).collect::<Result<_>>()?;
        let mut rmse: Vec<Option<f64>> = (0..k)
            .map(|j| optional(c[base + k + j], header[base + k + j]))
            .collect::<Result<_>>()?;
        // trailing blanks only pad shorter horizons
        while mae.last() == Some(&None) && rmse.last() == Some(&None) {
            mae.pop();
            rmse.pop();
        }
        out.push(EvalReport {
            model: c[0].to_string(),
            past: c[1].parse().map_err(|_| Error::input("bad past column"))?,
            n_samples: c[2].parse().map_err(|_| Error::input("bad n_samples column"))?,
            mae,
            rmse,
            mean_mae: parse_f64(c[4], "mean_mae")?,
            mean_rmse: parse_f64(c[6], "mean_rmse")?,
            mlns: parse_f64(c[7], "mlns")?,
            msqns: parse_f64(c[8], "msqns")?,
            mstns: parse_f64(c[9], "mstns")?,
        });
    }
    Ok(out)
}

pub fn write_metrics_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::input("no reports to write"));
    }
    fs::write(path, reports_to_csv(reports))?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<EvalReport>> {
    reports_from_csv(&fs::read_to_string(path)?)
}

/// Aligned text table for terminal output.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<11} {:>4} {:>8} {:>9} {:>8} {:>9} {:>7} {:>7} {:>7}",
        "model", "past", "MAE 1st", "Mean MAE", "RMSE 1st", "Mean RMSE", "MLNS", "MSQNS", "MSTNS"
    );
    let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
    for r in reports {
        let _ = writeln!(
            s,
            "{:<11} {:>4} {:>8} {:>9.3} {:>8} {:>9.3} {:>7.3} {:>7.2} {:>7.2}",
            r.model,
            r.past,
            f(r.mae_first()),
            r.mean_mae,
            f(r.rmse_first()),
            r.mean_rmse,
            r.mlns,
            r.msqns,
            r.mstns
        );
    }
    s
}

/// Writes `scatter_step{j}.csv` with `(defect_id, y_true, y_hat)` rows for
/// every unmasked prediction of step `j`.
pub fn write_scatter(dir: &Path, p: &Predictions) -> Result<()> {
    let k = p.masks.first().map_or(0, Vec::len);
    for j in 0..k {
        let mut w = BufWriter::new(File::create(dir.join(format!("scatter_step{}.csv", j + 1)))?);
        writeln!(w, "defect_id,y_true,y_hat")?;
        for i in 0..p.y.len() {
            if p.masks[i][j] {
                writeln!(w, "{},{},{}", p.defect_ids[i], p.y[i][j], p.y_hat[i][j])?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

/// Horizon sweep table, one row per past-horizon length.
pub fn write_horizon_sweep(path: &Path, reports: &[EvalReport]) -> Result<()> {
    write_metrics_csv(path, reports)
}
