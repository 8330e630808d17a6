use rand::Rng;

use super::spec::{ModelSpec, Route};
use crate::autodiff::{ParameterStore, Tape, Tensor, Var};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::nn::{Activation, CellState, DenseLayer, DropoutSpec, RecurrentCell};

/// Forecast of one batch: `B × k` means and, for bmh, `B × k` log-variances.
#[derive(Clone, Copy, Debug)]
pub struct ForecastOutput {
    pub y_hat: Var,
    pub s: Option<Var>,
}

/// Forward-pass options: dropout behaviour and its random source.
pub struct Pass<'a, R: Rng> {
    pub dropout: DropoutSpec,
    pub rng: &'a mut R,
}

/// Network layers of one [`ModelSpec`]; parameter values live in a store.
#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    static_encoder: Vec<DenseLayer>,
    dynamic_encoder: Vec<DenseLayer>,
    encoder: RecurrentCell,
    decoder: Option<RecurrentCell>,
    bridge_hidden: Option<DenseLayer>,
    bridge_cell: Option<DenseLayer>,
    head: Vec<DenseLayer>,
    variance_head: Option<Vec<DenseLayer>>,
}

fn mlp<R: Rng>(
    store: &mut ParameterStore,
    name: &str,
    input: usize,
    widths: &[usize],
    output: Option<usize>,
    rng: &mut R,
) -> Result<Vec<DenseLayer>> {
    let mut layers = Vec::new();
    let mut dim = input;
    for (i, &w) in widths.iter().enumerate() {
        layers.push(DenseLayer::new(store, &format!("{name}.{i}"), dim, w, Activation::Tanh, rng)?);
        dim = w;
    }
    if let Some(out) = output {
        layers.push(DenseLayer::new(store, &format!("{name}.out"), dim, out, Activation::Identity, rng)?);
    }
    Ok(layers)
}

fn out_dim(layers: &[DenseLayer], input: usize) -> usize {
    layers.last().map_or(input, |l| l.out_dim)
}

impl Model {
    /// Registers every parameter of `spec` in `store` with uniform
    /// `±1/√fan_in` initialization.
    pub fn new<R: Rng>(spec: ModelSpec, store: &mut ParameterStore, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let route = spec.kind.route();
        let (ns, nd) = (spec.layout.n_static, spec.layout.n_dynamic);
        let static_encoder = if ns == 0 {
            Vec::new()
        } else {
            mlp(store, "static_encoder", ns, &spec.static_widths, None, rng)?
        };
        let dynamic_encoder = mlp(store, "dynamic_encoder", nd, &spec.dynamic_widths, None, rng)?;
        let static_dim = if ns == 0 { 0 } else { out_dim(&static_encoder, ns) };
        let context_dim = out_dim(&dynamic_encoder, nd) + static_dim;
        let cell_kind = spec.kind.cell(spec.cell);
        let h = spec.hidden;

        let encoder_input = match route {
            Route::FeatureOnly => context_dim,
            Route::History | Route::MultiHorizon => context_dim + 1,
        };
        let encoder = RecurrentCell::new(store, "encoder", cell_kind, encoder_input, h, rng)?;
        let (mut decoder, mut bridge_hidden, mut bridge_cell) = (None, None, None);
        if route == Route::MultiHorizon {
            bridge_hidden = Some(DenseLayer::new(store, "bridge.hidden", h, h, Activation::Identity, rng)?);
            if cell_kind == crate::nn::CellKind::Lstm {
                bridge_cell = Some(DenseLayer::new(store, "bridge.cell", h, h, Activation::Identity, rng)?);
            }
            decoder = Some(RecurrentCell::new(store, "decoder", cell_kind, context_dim, h, rng)?);
        }
        let head_out = match route {
            Route::History => spec.future,
            _ => 1,
        };
        let head = mlp(store, "head", h, &spec.head_widths, Some(head_out), rng)?;
        let variance_head = if spec.kind.is_bayesian() {
            Some(mlp(store, "variance_head", h, &spec.head_widths, Some(1), rng)?)
        } else {
            None
        };
        Ok(Self {
            spec,
            static_encoder,
            dynamic_encoder,
            encoder,
            decoder,
            bridge_hidden,
            bridge_cell,
            head,
            variance_head,
        })
    }

    /// Runs `layers`, applying dropout to every hidden activation. The final
    /// identity output layer is left undropped.
    fn run_mlp<R: Rng>(
        layers: &[DenseLayer],
        tape: &mut Tape,
        store: &ParameterStore,
        mut x: Var,
        pass: &mut Pass<'_, R>,
    ) -> Result<Var> {
        for layer in layers {
            x = layer.forward(tape, store, x)?;
            if layer.activation != Activation::Identity {
                x = pass.dropout.apply(tape, x, pass.rng)?;
            }
        }
        Ok(x)
    }

    fn context<R: Rng>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        dynamic: &Tensor,
        static_code: Option<Var>,
        pass: &mut Pass<'_, R>,
    ) -> Result<Var> {
        let x = tape.constant(dynamic.clone());
        let d = Self::run_mlp(&self.dynamic_encoder, tape, store, x, pass)?;
        match static_code {
            Some(s) => tape.concat(&[d, s]),
            None => Ok(d),
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        let route = self.spec.kind.route();
        if batch.future_len() != self.spec.future {
            return Err(Error::input(format!(
                "{} expects a future horizon of {}, batch has {}",
                self.spec.kind,
                self.spec.future,
                batch.future_len()
            )));
        }
        match route {
            Route::FeatureOnly if batch.past_len() > 0 => Err(Error::input(format!(
                "{} uses exogenous features only; history inputs were supplied",
                self.spec.kind
            ))),
            Route::History | Route::MultiHorizon if batch.past_len() == 0 => Err(Error::input(
                format!("{} needs past lengths; batch has no past horizon", self.spec.kind),
            )),
            _ => Ok(()),
        }?;
        if batch.static_x.is_some() != (self.spec.layout.n_static > 0) {
            return Err(Error::input("static block does not match the model layout"));
        }
        Ok(())
    }

    /// Builds the forward graph of `batch` on `tape`.
    pub fn forward<R: Rng>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        batch: &Batch,
        pass: &mut Pass<'_, R>,
    ) -> Result<ForecastOutput> {
        self.check_batch(batch)?;
        let static_code = match &batch.static_x {
            Some(s) => {
                let x = tape.constant(s.clone());
                Some(Self::run_mlp(&self.static_encoder, tape, store, x, pass)?)
            }
            None => None,
        };
        match self.spec.kind.route() {
            Route::FeatureOnly => self.forward_feature_based(tape, store, batch, static_code, pass),
            Route::History => self.forward_history(tape, store, batch, static_code, pass),
            Route::MultiHorizon => self.forward_multi_horizon(tape, store, batch, static_code, pass),
        }
    }

    fn forward_feature_based<R: Rng>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        batch: &Batch,
        static_code: Option<Var>,
        pass: &mut Pass<'_, R>,
    ) -> Result<ForecastOutput> {
        let mut state = self.encoder.zero_state(tape, batch.size);
        let mut outputs = Vec::with_capacity(batch.future_len());
        for x in &batch.future_dynamic {
            let c = self.context(tape, store, x, static_code, pass)?;
            state = self.encoder.step(tape, store, c, &state)?;
            let h = pass.dropout.apply(tape, state.hidden, pass.rng)?;
            outputs.push(Self::run_mlp(&self.head, tape, store, h, pass)?);
        }
        Ok(ForecastOutput {
            y_hat: tape.concat(&outputs)?,
            s: None,
        })
    }

    fn encode_past<R: Rng>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        batch: &Batch,
        static_code: Option<Var>,
        pass: &mut Pass<'_, R>,
    ) -> Result<CellState> {
        let mut state = self.encoder.zero_state(tape, batch.size);
        for (x, y) in batch.past_dynamic.iter().zip(&batch.past_y) {
            let c = self.context(tape, store, x, static_code, pass)?;
            let y = tape.constant(y.clone());
            let input = tape.concat(&[c, y])?;
            state = self.encoder.step(tape, store, input, &state)?;
        }
        Ok(state)
    }

    fn forward_history<R: Rng>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        batch: &Batch,
        static_code: Option<Var>,
        pass: &mut Pass<'_, R>,
    ) -> Result<ForecastOutput> {
        let state = self.encode_past(tape, store, batch, static_code, pass)?;
        let h = pass.dropout.apply(tape, state.hidden, pass.rng)?;
        Ok(ForecastOutput {
            y_hat: Self::run_mlp(&self.head, tape, store, h, pass)?,
            s: None,
        })
    }

    fn forward_multi_horizon<R: Rng>(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        batch: &Batch,
        static_code: Option<Var>,
        pass: &mut Pass<'_, R>,
    ) -> Result<ForecastOutput> {
        let encoded = self.encode_past(tape, store, batch, static_code, pass)?;
        let decoder = self.decoder.as_ref().expect("multi-horizon model has a decoder");
        let bridge = self.bridge_hidden.as_ref().expect("multi-horizon model has a bridge");
        let mut state = CellState {
            hidden: bridge.forward(tape, store, encoded.hidden)?,
            cell: match (&self.bridge_cell, encoded.cell) {
                (Some(b), Some(c)) => Some(b.forward(tape, store, c)?),
                _ => None,
            },
        };
        let mut means = Vec::with_capacity(batch.future_len());
        let mut log_vars = Vec::new();
        for x in &batch.future_dynamic {
            let c = self.context(tape, store, x, static_code, pass)?;
            state = decoder.step(tape, store, c, &state)?;
            let h = pass.dropout.apply(tape, state.hidden, pass.rng)?;
            means.push(Self::run_mlp(&self.head, tape, store, h, pass)?);
            if let Some(vh) = &self.variance_head {
                log_vars.push(Self::run_mlp(vh, tape, store, h, pass)?);
            }
        }
        Ok(ForecastOutput {
            y_hat: tape.concat(&means)?,
            s: if log_vars.is_empty() {
                None
            } else {
                Some(tape.concat(&log_vars)?)
            },
        })
    }

    /// Forward pass on a fresh tape, returning plain tensors.
    pub fn predict<R: Rng>(
        &self,
        store: &ParameterStore,
        batch: &Batch,
        pass: &mut Pass<'_, R>,
    ) -> Result<(Tensor, Option<Tensor>)> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, store, batch, pass)?;
        let y = tape.value(out.y_hat).clone();
        let s = out.s.map(|s| tape.value(s).clone());
        Ok((y, s))
    }
}
