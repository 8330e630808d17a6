//! Sequence-normalized masked losses.
//!
//! Both losses average over sequences, each normalized by its own count of
//! real steps `N_i`. They are built as `Σ_ij w_ij · term_ij` with the
//! constant weight `w_ij = mask_ij / (B · N_i)`, so a padded step contributes
//! exactly zero to the value and to every gradient.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    MaskedMse,
    Bmh,
}

impl LossKind {
    pub fn column_name(self) -> &'static str {
        match self {
            LossKind::MaskedMse => "masked_mse",
            LossKind::Bmh => "bmh_loss",
        }
    }
}

/// `mask_ij / (B · N_i)`, validating that `N_i` matches the mask.
pub fn sequence_weights(mask: &Tensor, n_valid: &[usize]) -> Result<Tensor> {
    let (b, k) = (mask.rows(), mask.cols());
    if n_valid.len() != b {
        return Err(Error::ShapeMismatch {
            op: "loss weights",
            lhs: mask.shape().to_vec(),
            rhs: vec![n_valid.len()],
        });
    }
    let mut data = Vec::with_capacity(b * k);
    for (i, &n) in n_valid.iter().enumerate() {
        let row = mask.row(i);
        let count = row.iter().filter(|&&m| m != 0.0).count();
        if n == 0 || count == 0 {
            return Err(Error::EmptySequence(i));
        }
        if count != n {
            return Err(Error::input(format!(
                "sequence {i}: N_i = {n} but the mask has {count} real steps"
            )));
        }
        let w = 1.0 / (b as f64 * n as f64);
        data.extend(row.iter().map(|&m| if m != 0.0 { w } else { 0.0 }));
    }
    Tensor::matrix(b, k, data)
}

fn check_shape(tape: &Tape, v: Var, target: &Tensor, op: &'static str) -> Result<()> {
    if tape.value(v).shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: tape.value(v).shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    Ok(())
}

fn squared_residual(tape: &mut Tape, y_hat: Var, y: &Tensor) -> Result<Var> {
    let target = tape.constant(y.clone());
    let r = tape.sub(y_hat, target)?;
    tape.mul(r, r)
}

pub fn masked_mse(tape: &mut Tape, y_hat: Var, y: &Tensor, mask: &Tensor, n_valid: &[usize]) -> Result<Var> {
    check_shape(tape, y_hat, y, "masked_mse")?;
    check_shape(tape, y_hat, mask, "masked_mse mask")?;
    let w = sequence_weights(mask, n_valid)?;
    let r2 = squared_residual(tape, y_hat, y)?;
    let w = tape.constant(w);
    let weighted = tape.mul(r2, w)?;
    Ok(tape.sum(weighted))
}

/// `mean_i (1/N_i) Σ_j mask_ij [(2/3)·exp(−s_ij)·r_ij² + s_ij/3]`.
pub fn bmh_loss(
    tape: &mut Tape,
    y_hat: Var,
    s: Var,
    y: &Tensor,
    mask: &Tensor,
    n_valid: &[usize],
) -> Result<Var> {
    check_shape(tape, y_hat, y, "bmh_loss")?;
    check_shape(tape, s, y, "bmh_loss log-variance")?;
    check_shape(tape, y_hat, mask, "bmh_loss mask")?;
    let w = sequence_weights(mask, n_valid)?;
    let r2 = squared_residual(tape, y_hat, y)?;
    let neg_s = tape.negate(s);
    let precision = tape.exp(neg_s);
    let fit = tape.mul(precision, r2)?;
    let fit = tape.affine(fit, 2.0 / 3.0, 0.0);
    let reg = tape.affine(s, 1.0 / 3.0, 0.0);
    let term = tape.add(fit, reg)?;
    let w = tape.constant(w);
    let weighted = tape.mul(term, w)?;
    Ok(tape.sum(weighted))
}

/// Plain-float `masked_mse` for evaluation.
pub fn masked_mse_value(y_hat: &Tensor, y: &Tensor, mask: &Tensor, n_valid: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let v = tape.constant(y_hat.clone());
    let l = masked_mse(&mut tape, v, y, mask, n_valid)?;
    Ok(tape.value(l).item())
}

pub fn bmh_loss_value(y_hat: &Tensor, s: &Tensor, y: &Tensor, mask: &Tensor, n_valid: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let v = tape.constant(y_hat.clone());
    let sv = tape.constant(s.clone());
    let l = bmh_loss(&mut tape, v, sv, y, mask, n_valid)?;
    Ok(tape.value(l).item())
}
