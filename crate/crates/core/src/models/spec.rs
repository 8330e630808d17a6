use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::FeatureLayout;
use crate::error::{Error, Result};
use crate::nn::CellKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    RnnFc,
    GruFc,
    LstmFc,
    LstmFcLh,
    GruFcLh,
    Mh,
    Bmh,
}

/// Which inputs a kind consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    /// Exogenous features of the window only.
    FeatureOnly,
    /// Past features and lengths, flat head over the final latent state.
    History,
    /// Encoder over the past, decoder over the future context.
    MultiHorizon,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::RnnFc,
        ModelKind::GruFc,
        ModelKind::LstmFc,
        ModelKind::LstmFcLh,
        ModelKind::GruFcLh,
        ModelKind::Mh,
        ModelKind::Bmh,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::RnnFc => "rnn-fc",
            ModelKind::GruFc => "gru-fc",
            ModelKind::LstmFc => "lstm-fc",
            ModelKind::LstmFcLh => "lstm-fc-lh",
            ModelKind::GruFcLh => "gru-fc-lh",
            ModelKind::Mh => "mh",
            ModelKind::Bmh => "bmh",
        }
    }

    pub fn route(self) -> Route {
        match self {
            ModelKind::RnnFc | ModelKind::GruFc | ModelKind::LstmFc => Route::FeatureOnly,
            ModelKind::LstmFcLh | ModelKind::GruFcLh => Route::History,
            ModelKind::Mh | ModelKind::Bmh => Route::MultiHorizon,
        }
    }

    pub fn is_bayesian(self) -> bool {
        self == ModelKind::Bmh
    }

    /// Recurrent cell implied by the kind; multi-horizon kinds use `chosen`.
    pub fn cell(self, chosen: CellKind) -> CellKind {
        match self {
            ModelKind::RnnFc => CellKind::Rnn,
            ModelKind::GruFc | ModelKind::GruFcLh => CellKind::Gru,
            ModelKind::LstmFc | ModelKind::LstmFcLh => CellKind::Lstm,
            ModelKind::Mh | ModelKind::Bmh => chosen,
        }
    }

    /// Default `(past, future)` window for the kind.
    pub fn default_window(self) -> (usize, usize) {
        match self.route() {
            Route::FeatureOnly => (0, 4),
            _ => (5, 4),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown model kind `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Cell of the multi-horizon encoder and decoder.
    pub cell: CellKind,
    pub static_widths: Vec<usize>,
    pub dynamic_widths: Vec<usize>,
    pub hidden: usize,
    /// Hidden widths of the output head; the output layer is added on top.
    pub head_widths: Vec<usize>,
    pub dropout: f64,
    pub past: usize,
    pub future: usize,
    pub layout: FeatureLayout,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, layout: FeatureLayout) -> Self {
        let (past, future) = kind.default_window();
        Self {
            kind,
            cell: CellKind::Gru,
            static_widths: vec![32],
            dynamic_widths: vec![64],
            hidden: 64,
            head_widths: vec![32],
            dropout: 0.1,
            past,
            future,
            layout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.future == 0 {
            return Err(Error::config("hidden size and future horizon must be positive"));
        }
        if self.layout.n_dynamic == 0 {
            return Err(Error::config("at least one dynamic feature channel is required"));
        }
        let widths = self.static_widths.iter().chain(&self.dynamic_widths).chain(&self.head_widths);
        if widths.copied().any(|w| w == 0) {
            return Err(Error::config("layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        match self.kind.route() {
            Route::FeatureOnly if self.past != 0 => {
                Err(Error::config(format!("{} uses no past horizon; set past to 0", self.kind)))
            }
            Route::History | Route::MultiHorizon if self.past == 0 => {
                Err(Error::config(format!("{} needs a past horizon of at least 1", self.kind)))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{k}\""));
        }
        assert!("transformer".parse::<ModelKind>().is_err());
    }

    #[test]
    fn window_rules() {
        let layout = FeatureLayout { n_static: 2, n_dynamic: 3 };
        assert!(ModelSpec::new(ModelKind::LstmFc, layout).validate().is_ok());
        let mut s = ModelSpec::new(ModelKind::Mh, layout);
        s.past = 0;
        assert!(s.validate().is_err());
        let mut s = ModelSpec::new(ModelKind::GruFc, layout);
        s.past = 3;
        assert!(s.validate().is_err());
    }
}
