//! Column-major mini-batches: one `B × width` tensor per time step.

use super::schema::FeatureLayout;
use super::window::WindowSample;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub size: usize,
    /// Static block, taken from the first step of each sample.
    pub static_x: Option<Tensor>,
    pub past_dynamic: Vec<Tensor>,
    /// `B × 1` past lengths per step.
    pub past_y: Vec<Tensor>,
    pub future_dynamic: Vec<Tensor>,
    /// `B × k` targets; padded entries are 0.
    pub future_y: Tensor,
    /// `B × k` with 1 for real steps.
    pub future_mask: Tensor,
    pub n_valid: Vec<usize>,
}

fn step_tensor(rows: impl Iterator<Item = Vec<f64>>, batch: usize, width: usize) -> Result<Tensor> {
    let data: Vec<f64> = rows.flatten().collect();
    Tensor::matrix(batch, width, data)
}

impl Batch {
    pub fn from_samples(samples: &[&WindowSample], layout: FeatureLayout) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::input("cannot build an empty batch"))?;
        let (t, k) = (first.past_len(), first.future_len());
        let (b, ns, nd) = (samples.len(), layout.n_static, layout.n_dynamic);
        for s in samples {
            if s.past_len() != t || s.future_len() != k {
                return Err(Error::input("samples in a batch must share t and k"));
            }
            if s.n_valid == 0 {
                return Err(Error::EmptySequence(0));
            }
            let widths_ok = s
                .past_x
                .iter()
                .chain(&s.future_x)
                .all(|r| r.len() == layout.n_features());
            if !widths_ok {
                return Err(Error::input(format!(
                    "sample {} does not match {} feature channels",
                    s.defect_id,
                    layout.n_features()
                )));
            }
        }
        let static_x = if ns == 0 {
            None
        } else {
            let rows = samples.iter().map(|s| {
                let r = s.past_x.first().unwrap_or(&s.future_x[0]);
                r[..ns].to_vec()
            });
            Some(step_tensor(rows, b, ns)?)
        };
        let dynamic = |pick: &dyn Fn(&WindowSample) -> &Vec<f64>| {
            step_tensor(samples.iter().map(|s| pick(s)[ns..].to_vec()), b, nd)
        };
        let past_dynamic = (0..t)
            .map(|j| dynamic(&|s: &WindowSample| &s.past_x[j]))
            .collect::<Result<_>>()?;
        let future_dynamic = (0..k)
            .map(|j| dynamic(&|s: &WindowSample| &s.future_x[j]))
            .collect::<Result<_>>()?;
        let past_y = (0..t)
            .map(|j| Tensor::matrix(b, 1, samples.iter().map(|s| s.past_y[j]).collect()))
            .collect::<Result<_>>()?;
        let future_y = Tensor::matrix(
            b,
            k,
            samples
                .iter()
                .flat_map(|s| s.future_y.iter().zip(&s.future_mask).map(|(&y, &m)| if m { y } else { 0.0 }))
                .collect(),
        )?;
        let future_mask = Tensor::matrix(
            b,
            k,
            samples
                .iter()
                .flat_map(|s| s.future_mask.iter().map(|&m| f64::from(u8::from(m))))
                .collect(),
        )?;
        Ok(Self {
            size: b,
            static_x,
            past_dynamic,
            past_y,
            future_dynamic,
            future_y,
            future_mask,
            n_valid: samples.iter().map(|s| s.n_valid).collect(),
        })
    }

    pub fn past_len(&self) -> usize {
        self.past_y.len()
    }

    pub fn future_len(&self) -> usize {
        self.future_dynamic.len()
    }
}
