//! Monte Carlo dropout sampling, epistemic/aleatoric decomposition and
//! interval coverage.
//!
//! The epistemic term is the population variance of the sampled means,
//! `E[ŷ²] − E[ŷ]²`, clamped at 0 against round-off.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParameterStore;
use crate::data::{ScalerParams, WindowSample};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::nn::{DropoutMode, DropoutSpec};
use crate::rng;
use crate::training::predict_samples;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCDropoutConfig {
    pub samples: usize,
    pub dropout: f64,
    pub z: f64,
    pub widen_mm: f64,
    pub seed: u64,
}

impl Default for MCDropoutConfig {
    fn default() -> Self {
        Self {
            samples: 50,
            dropout: 0.1,
            z: 1.96,
            widen_mm: 5.0,
            seed: 0,
        }
    }
}

impl MCDropoutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::config("at least 2 Monte Carlo samples are required"));
        }
        if !(self.dropout > 0.0 && self.dropout < 1.0) {
            return Err(Error::config(format!("dropout must lie in (0, 1), got {}", self.dropout)));
        }
        if !(self.widen_mm >= 0.0 && self.widen_mm.is_finite()) {
            return Err(Error::config("widen_mm must be non-negative"));
        }
        if !(self.z >= 0.0 && self.z.is_finite()) {
            return Err(Error::config("z must be non-negative"));
        }
        Ok(())
    }

    pub fn dropout_spec(&self) -> Result<DropoutSpec> {
        DropoutSpec::new(self.dropout, DropoutMode::InferenceActive)
    }
}

/// `T` stochastic forecasts in mm: `means[t][i][j]`, `variances[t][i][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct McDraws {
    pub means: Vec<Vec<Vec<f64>>>,
    pub variances: Vec<Vec<Vec<f64>>>,
}

impl McDraws {
    pub fn n_draws(&self) -> usize {
        self.means.len()
    }

    /// Draws of step `j` of sample `i`.
    pub fn step(&self, i: usize, j: usize) -> (Vec<f64>, Vec<f64>) {
        (
            self.means.iter().map(|d| d[i][j]).collect(),
            self.variances.iter().map(|d| d[i][j]).collect(),
        )
    }
}

/// Runs `draws` passes of a bmh model with `dropout`, each with its own
/// stream, and maps the outputs to mm and mm².
pub fn mc_sample_with(
    model: &Model,
    store: &ParameterStore,
    scaler: &ScalerParams,
    samples: &[WindowSample],
    draws: usize,
    dropout: DropoutSpec,
    seed: u64,
) -> Result<McDraws> {
    if !model.spec.kind.is_bayesian() {
        return Err(Error::config(format!(
            "Monte Carlo sampling needs a bmh model, got {}",
            model.spec.kind
        )));
    }
    let mut means = Vec::with_capacity(draws);
    let mut variances = Vec::with_capacity(draws);
    for t in 0..draws {
        let mut r = rng::stream(seed, rng::DROPOUT, t as u64);
        let (y, s) = predict_samples(model, store, samples, dropout, &mut r)?;
        let s = s.expect("bmh model emits log-variances");
        means.push(
            y.iter()
                .map(|row| row.iter().map(|&v| scaler.inverse_target(v)).collect())
                .collect(),
        );
        variances.push(
            s.iter()
                .map(|row| row.iter().map(|&v| scaler.inverse_variance(v.exp())).collect())
                .collect(),
        );
    }
    Ok(McDraws { means, variances })
}

pub fn mc_sample(
    model: &Model,
    store: &ParameterStore,
    scaler: &ScalerParams,
    samples: &[WindowSample],
    config: &MCDropoutConfig,
) -> Result<McDraws> {
    config.validate()?;
    mc_sample_with(model, store, scaler, samples, config.samples, config.dropout_spec()?, config.seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDistribution {
    pub mean: f64,
    pub epistemic: f64,
    pub aleatoric: f64,
    pub total: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Moments of `T` draws of one step; the interval is
/// `mean ± (z·√total + widen_mm)`.
pub fn decompose_variance(means: &[f64], variances: &[f64], z: f64, widen_mm: f64) -> Result<StepDistribution> {
    if means.len() < 2 || means.len() != variances.len() {
        return Err(Error::input(format!(
            "need at least 2 aligned draws, got {} means and {} variances",
            means.len(),
            variances.len()
        )));
    }
    let t = means.len() as f64;
    let mean = means.iter().sum::<f64>() / t;
    let second = means.iter().map(|y| y * y).sum::<f64>() / t;
    let epistemic = (second - mean * mean).max(0.0);
    let aleatoric = variances.iter().sum::<f64>() / t;
    let total = epistemic + aleatoric;
    let half = z * total.sqrt() + widen_mm;
    Ok(StepDistribution {
        mean,
        epistemic,
        aleatoric,
        total,
        lower: mean - half,
        upper: mean + half,
    })
}

/// Per-sample, per-step predictive distributions.
pub type PredictiveDistribution = Vec<Vec<StepDistribution>>;

pub fn predictive_distribution(draws: &McDraws, z: f64, widen_mm: f64) -> Result<PredictiveDistribution> {
    let first = draws.means.first().ok_or_else(|| Error::input("no draws"))?;
    (0..first.len())
        .map(|i| {
            (0..first[i].len())
                .map(|j| {
                    let (m, v) = draws.step(i, j);
                    decompose_variance(&m, &v, z, widen_mm)
                })
                .collect()
        })
        .collect()
}

/// Percentage of unmasked steps whose target lies inside its interval.
pub fn coverage(intervals: &[Vec<(f64, f64)>], targets: &[Vec<f64>], masks: &[Vec<bool>]) -> Result<f64> {
    if intervals.len() != targets.len() || targets.len() != masks.len() {
        return Err(Error::input("coverage inputs are not aligned"));
    }
    let (mut inside, mut total) = (0usize, 0usize);
    for ((iv, ys), ms) in intervals.iter().zip(targets).zip(masks) {
        if iv.len() != ys.len() || ys.len() != ms.len() {
            return Err(Error::input("coverage inputs are not aligned"));
        }
        for ((&(lo, hi), &y), &m) in iv.iter().zip(ys).zip(ms) {
            if m {
                total += 1;
                inside += usize::from(lo <= y && y <= hi);
            }
        }
    }
    if total == 0 {
        return Err(Error::input("coverage needs at least one unmasked step"));
    }
    Ok(100.0 * inside as f64 / total as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UqReport {
    pub widened: PredictiveDistribution,
    /// Coverage of `mean ± z·√total`.
    pub raw_coverage: f64,
    /// Coverage of `mean ± (z·√total + widen_mm)`.
    pub widened_coverage: f64,
    pub mean_epistemic: f64,
    pub mean_aleatoric: f64,
}

/// Samples, decomposes and scores the intervals against `raw` (mm) targets.
/// `scaled` holds the same windows in model units.
pub fn run_uq(
    model: &Model,
    store: &ParameterStore,
    scaler: &ScalerParams,
    raw: &[WindowSample],
    scaled: &[WindowSample],
    config: &MCDropoutConfig,
) -> Result<UqReport> {
    if raw.len() != scaled.len() {
        return Err(Error::input("raw and scaled samples are not aligned"));
    }
    let draws = mc_sample(model, store, scaler, scaled, config)?;
    let widened = predictive_distribution(&draws, config.z, config.widen_mm)?;
    let targets: Vec<Vec<f64>> = raw.iter().map(|s| s.future_y.clone()).collect();
    let masks: Vec<Vec<bool>> = raw.iter().map(|s| s.future_mask.clone()).collect();
    let intervals = |widen: f64| -> Vec<Vec<(f64, f64)>> {
        widened
            .iter()
            .map(|steps| {
                steps
                    .iter()
                    .map(|d| {
                        let half = config.z * d.total.sqrt() + widen;
                        (d.mean - half, d.mean + half)
                    })
                    .collect()
            })
            .collect()
    };
    let raw_coverage = coverage(&intervals(0.0), &targets, &masks)?;
    let widened_coverage = coverage(&intervals(config.widen_mm), &targets, &masks)?;
    let (mut e, mut a, mut n) = (0.0, 0.0, 0usize);
    for (steps, ms) in widened.iter().zip(&masks) {
        for (d, &m) in steps.iter().zip(ms) {
            if m {
                e += d.epistemic;
                a += d.aleatoric;
                n += 1;
            }
        }
    }
    Ok(UqReport {
        widened,
        raw_coverage,
        widened_coverage,
        mean_epistemic: e / n as f64,
        mean_aleatoric: a / n as f64,
    })
}

/// Writes one row per unmasked forecast step.
pub fn write_uq_csv(path: &Path, report: &UqReport, raw: &[WindowSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "defect_id,start,step,y_true,y_hat,epistemic,aleatoric,lower,upper,covered")?;
    for (s, steps) in raw.iter().zip(&report.widened) {
        for (j, d) in steps.iter().enumerate() {
            if !s.future_mask[j] {
                continue;
            }
            let y = s.future_y[j];
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                s.defect_id,
                s.start,
                j + 1,
                y,
                d.mean,
                d.epistemic,
                d.aleatoric,
                d.lower,
                d.upper,
                u8::from(d.lower <= y && y <= d.upper)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}
