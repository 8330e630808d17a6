//! Self-describing JSON checkpoints. Parameter values are stored as base64
//! little-endian `f64` bytes, so a save/load round trip is bit-exact.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::network::Model;
use super::spec::ModelSpec;
use crate::autodiff::{ParameterStore, Tensor};
use crate::data::ScalerParams;
use crate::error::{Error, Result};
use crate::rng::StreamRng;

pub const FORMAT: &str = "crackcast-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ParameterBlob {
    name: String,
    shape: Vec<usize>,
    data: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    spec: ModelSpec,
    scaler: Option<ScalerParams>,
    parameters: Vec<ParameterBlob>,
}

/// A model spec, its parameters and the scaler it was trained with.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub scaler: Option<ScalerParams>,
    pub store: ParameterStore,
}

fn encode(t: &Tensor) -> String {
    let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(blob: &ParameterBlob) -> Result<Tensor> {
    let bytes = STANDARD
        .decode(&blob.data)
        .map_err(|e| Error::Checkpoint(format!("parameter {}: {e}", blob.name)))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!("parameter {} has a truncated payload", blob.name)));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Tensor::new(blob.shape.clone(), data)
}

impl Checkpoint {
    /// Rebuilds the layer structure described by `spec`; values come from `store`.
    pub fn model(&self) -> Result<Model> {
        let mut scratch = ParameterStore::new();
        Model::new(self.spec.clone(), &mut scratch, &mut StreamRng::seed_from_u64(0))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format: FORMAT.into(),
            version: VERSION,
            spec: self.spec.clone(),
            scaler: self.scaler.clone(),
            parameters: self
                .store
                .iter()
                .map(|(name, t)| ParameterBlob {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    data: encode(t),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format != FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format `{}`", file.format)));
        }
        if file.version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", file.version)));
        }
        // `spec` determines the parameter set; rebuild it and fill values
        let mut store = ParameterStore::new();
        Model::new(file.spec.clone(), &mut store, &mut StreamRng::seed_from_u64(0))?;
        if store.len() != file.parameters.len() {
            return Err(Error::Checkpoint(format!(
                "spec implies {} parameters, file has {}",
                store.len(),
                file.parameters.len()
            )));
        }
        for blob in &file.parameters {
            store
                .set(&blob.name, decode(blob)?)
                .map_err(|e| Error::Checkpoint(format!("parameter {}: {e}", blob.name)))?;
        }
        Ok(Self {
            spec: file.spec,
            scaler: file.scaler,
            store,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
