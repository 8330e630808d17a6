//! Central finite differences, used as an independent oracle for the tape.

use super::{ParameterStore, Tensor};
use crate::error::{Error, Result};

/// Denominator floor for relative errors, so that entries whose true
/// gradient is ~0 are judged on absolute error instead.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// `(f(p + h·eᵢ) − f(p − h·eᵢ)) / 2h` for every coordinate of `p`.
pub fn finite_difference_gradient<F>(mut f: F, p: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::config("finite-difference step must be positive"));
    }
    let mut probe = p.clone();
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    Tensor::new(p.shape().to_vec(), grad)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Outcome of comparing a store's analytic gradients against finite
/// differences of `loss` over every scalar weight.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub checked: usize,
}

/// Perturbs every parameter entry of `store` and compares against the
/// gradients currently held in it. `loss` must be deterministic.
pub fn check_store_gradients<F>(store: &ParameterStore, mut loss: F, h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterStore) -> Result<f64>,
{
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        checked: 0,
    };
    for id in store.ids() {
        let analytic = store.grad(id).clone();
        let value = store.value(id).clone();
        let numeric = finite_difference_gradient(
            |p| {
                *probe.value_mut(id) = p.clone();
                loss(&probe)
            },
            &value,
            h,
        )?;
        *probe.value_mut(id) = value;
        for (&a, &n) in analytic.data().iter().zip(numeric.data()) {
            let err = relative_error(a, n);
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_parameter = store.name(id).to_string();
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let g = finite_difference_gradient(
            |p| Ok(p.item() * p.item()),
            &Tensor::scalar(3.0),
            1e-5,
        )
        .unwrap();
        assert!((g.item() - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function() {
        let g = finite_difference_gradient(|_| Ok(7.5), &Tensor::vector(vec![1.0, -2.0, 3.0]), 1e-5)
            .unwrap();
        assert!(g.data().iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn exp_at_zero() {
        let g = finite_difference_gradient(|p| Ok(p.item().exp()), &Tensor::scalar(0.0), 1e-5)
            .unwrap();
        assert!((g.item() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_non_positive_step() {
        assert!(finite_difference_gradient(|_| Ok(0.0), &Tensor::scalar(0.0), 0.0).is_err());
    }
}
