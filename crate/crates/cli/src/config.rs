//! Config file layer. Every key is optional; command-line flags win over the
//! file and the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub general: General,
    #[serde(default)]
    pub synth: Synth,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: Train,
    #[serde(default)]
    pub uq: Uq,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct General {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Synth {
    pub n_defects: Option<usize>,
    pub features: Option<usize>,
    pub rounding_probability: Option<f64>,
    pub grinding_probability: Option<f64>,
    pub jump_probability: Option<f64>,
    pub misread_probability: Option<f64>,
    pub visit_gap_median_months: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub model: Option<String>,
    pub cell: Option<String>,
    pub hidden: Option<usize>,
    pub dropout: Option<f64>,
    pub past: Option<usize>,
    pub future: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Train {
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub epochs: Option<usize>,
    pub clip: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Uq {
    pub samples: Option<usize>,
    pub widen: Option<f64>,
    pub z: Option<f64>,
    pub dropout: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
