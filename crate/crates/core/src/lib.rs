//! Rail crack length forecasting with recurrent networks.
//!
//! The crate covers the whole experiment chain: a small reverse-mode
//! autodiff engine, recurrent layers, the irregular-to-regular data
//! pipeline, a synthetic crack-growth generator, seven forecaster variants,
//! training, Monte Carlo dropout uncertainty and evaluation metrics.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod training;
pub mod uncertainty;

pub use error::{Error, Result};
