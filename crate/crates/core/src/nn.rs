//! Dense layers, recurrent cells and dropout on top of the tape.
//!
//! Layers only hold parameter ids; values live in a [`ParameterStore`] so the
//! same layer can be evaluated on many tapes (one per forward pass).

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParameterStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

/// `uniform(−1/√fan_in, +1/√fan_in)` initialization.
fn init_uniform<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect())
        .expect("shape matches data")
}

fn check_cols(op: &'static str, tape: &Tape, x: Var, expected: usize) -> Result<()> {
    let shape = tape.value(x).shape();
    if shape.len() != 2 || shape[1] != expected {
        return Err(Error::ShapeMismatch {
            op,
            lhs: shape.to_vec(),
            rhs: vec![expected],
        });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct DenseLayer {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.insert(
            format!("{name}.weight"),
            init_uniform(&[out_dim, in_dim], in_dim, rng),
        )?;
        let bias = store.insert(format!("{name}.bias"), init_uniform(&[out_dim], in_dim, rng))?;
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
            activation,
        })
    }

    /// `activation(x · Wᵀ + b)` for a `[batch × in]` input.
    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var> {
        check_cols("dense", tape, x, self.in_dim)?;
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        let xw = tape.matmul_t(x, w)?;
        let z = tape.add(xw, b)?;
        Ok(match self.activation {
            Activation::Tanh => tape.tanh(z),
            Activation::Identity => z,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Lstm,
    Gru,
}

impl CellKind {
    fn gate_names(self) -> &'static [&'static str] {
        match self {
            CellKind::Rnn => &["h"],
            CellKind::Lstm => &["i", "f", "o", "g"],
            CellKind::Gru => &["z", "r", "n"],
        }
    }
}

#[derive(Clone, Debug)]
struct Gate {
    input: ParamId,
    recurrent: ParamId,
    bias: ParamId,
}

/// Recurrent state; `cell` is only present for LSTM.
#[derive(Clone, Copy, Debug)]
pub struct CellState {
    pub hidden: Var,
    pub cell: Option<Var>,
}

/// Single-layer RNN / LSTM / GRU cell.
///
/// * rnn:  `h' = tanh(W x + U h + b)`
/// * lstm: `i, f, o = σ(·)`, `g = tanh(·)`, `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`
/// * gru:  `z, r = σ(·)`, `n = tanh(W x + U (r⊙h) + b)`, `h' = z⊙h + (1−z)⊙n`
#[derive(Clone, Debug)]
pub struct RecurrentCell {
    pub kind: CellKind,
    pub input_size: usize,
    pub hidden_size: usize,
    gates: Vec<Gate>,
}

impl RecurrentCell {
    pub fn new<R: Rng>(
        store: &mut ParameterStore,
        name: &str,
        kind: CellKind,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut gates = Vec::new();
        for g in kind.gate_names() {
            let input = store.insert(
                format!("{name}.{g}.input"),
                init_uniform(&[hidden_size, input_size], input_size, rng),
            )?;
            let recurrent = store.insert(
                format!("{name}.{g}.recurrent"),
                init_uniform(&[hidden_size, hidden_size], hidden_size, rng),
            )?;
            let bias = store.insert(
                format!("{name}.{g}.bias"),
                init_uniform(&[hidden_size], hidden_size, rng),
            )?;
            gates.push(Gate {
                input,
                recurrent,
                bias,
            });
        }
        Ok(Self {
            kind,
            input_size,
            hidden_size,
            gates,
        })
    }

    /// Parameter ids of gate `index` as (input weight, recurrent weight, bias).
    pub fn gate_params(&self, index: usize) -> (ParamId, ParamId, ParamId) {
        let g = &self.gates[index];
        (g.input, g.recurrent, g.bias)
    }

    pub fn zero_state(&self, tape: &mut Tape, batch: usize) -> CellState {
        let hidden = tape.constant(Tensor::zeros(&[batch, self.hidden_size]));
        let cell = (self.kind == CellKind::Lstm)
            .then(|| tape.constant(Tensor::zeros(&[batch, self.hidden_size])));
        CellState { hidden, cell }
    }

    fn pre_activation(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        gate: usize,
        x: Var,
        h: Var,
    ) -> Result<Var> {
        let g = &self.gates[gate];
        let (w, u, b) = (
            tape.param(store, g.input),
            tape.param(store, g.recurrent),
            tape.param(store, g.bias),
        );
        let wx = tape.matmul_t(x, w)?;
        let uh = tape.matmul_t(h, u)?;
        let s = tape.add(wx, uh)?;
        tape.add(s, b)
    }

    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        x: Var,
        state: &CellState,
    ) -> Result<CellState> {
        check_cols("cell input", tape, x, self.input_size)?;
        check_cols("cell hidden", tape, state.hidden, self.hidden_size)?;
        if tape.value(x).rows() != tape.value(state.hidden).rows() {
            return Err(Error::ShapeMismatch {
                op: "cell batch",
                lhs: tape.value(x).shape().to_vec(),
                rhs: tape.value(state.hidden).shape().to_vec(),
            });
        }
        let h = state.hidden;
        match self.kind {
            CellKind::Rnn => {
                let a = self.pre_activation(tape, store, 0, x, h)?;
                Ok(CellState {
                    hidden: tape.tanh(a),
                    cell: None,
                })
            }
            CellKind::Lstm => {
                let c = state
                    .cell
                    .ok_or_else(|| Error::InvalidInput("lstm step needs a cell state".into()))?;
                check_cols("cell memory", tape, c, self.hidden_size)?;
                let i = self.pre_activation(tape, store, 0, x, h)?;
                let i = tape.sigmoid(i);
                let f = self.pre_activation(tape, store, 1, x, h)?;
                let f = tape.sigmoid(f);
                let o = self.pre_activation(tape, store, 2, x, h)?;
                let o = tape.sigmoid(o);
                let g = self.pre_activation(tape, store, 3, x, h)?;
                let g = tape.tanh(g);
                let fc = tape.mul(f, c)?;
                let ig = tape.mul(i, g)?;
                let c_next = tape.add(fc, ig)?;
                let tc = tape.tanh(c_next);
                let h_next = tape.mul(o, tc)?;
                Ok(CellState {
                    hidden: h_next,
                    cell: Some(c_next),
                })
            }
            CellKind::Gru => {
                let z = self.pre_activation(tape, store, 0, x, h)?;
                let z = tape.sigmoid(z);
                let r = self.pre_activation(tape, store, 1, x, h)?;
                let r = tape.sigmoid(r);
                let rh = tape.mul(r, h)?;
                let n = self.pre_activation(tape, store, 2, x, rh)?;
                let n = tape.tanh(n);
                let zh = tape.mul(z, h)?;
                let one_minus_z = tape.affine(z, -1.0, 1.0);
                let zn = tape.mul(one_minus_z, n)?;
                let h_next = tape.add(zh, zn)?;
                Ok(CellState {
                    hidden: h_next,
                    cell: None,
                })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropoutMode {
    /// Active while fitting.
    Train,
    /// Active at prediction time, for Monte Carlo sampling.
    InferenceActive,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutSpec {
    rate: f64,
    mode: DropoutMode,
}

impl DropoutSpec {
    pub fn new(rate: f64, mode: DropoutMode) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Self { rate, mode })
    }

    pub fn off() -> Self {
        Self {
            rate: 0.0,
            mode: DropoutMode::Off,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn mode(&self) -> DropoutMode {
        self.mode
    }

    pub fn is_active(&self) -> bool {
        self.mode != DropoutMode::Off && self.rate > 0.0
    }

    /// Inverted-dropout mask: 0 with probability `rate`, else `1/(1−rate)`.
    pub fn mask<R: Rng>(&self, shape: &[usize], rng: &mut R) -> Tensor {
        let keep = 1.0 / (1.0 - self.rate);
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        Tensor::new(shape.to_vec(), data).expect("shape matches data")
    }

    pub fn apply_tensor<R: Rng>(&self, x: &Tensor, rng: &mut R) -> Tensor {
        if !self.is_active() {
            return x.clone();
        }
        let mask = self.mask(x.shape(), rng);
        let data = x.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect();
        Tensor::new(x.shape().to_vec(), data).expect("same shape")
    }

    pub fn apply<R: Rng>(&self, tape: &mut Tape, x: Var, rng: &mut R) -> Result<Var> {
        if !self.is_active() {
            return Ok(x);
        }
        let mask = self.mask(tape.value(x).shape(), rng);
        let m = tape.constant(mask);
        tape.mul(x, m)
    }
}
