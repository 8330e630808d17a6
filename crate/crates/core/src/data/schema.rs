//! Channel layout of the per-step exogenous feature matrix.
//!
//! Columns are ordered `[static numeric | static one-hot | dynamic numeric |
//! dynamic one-hot | engineered]`. The static block comes first so models can
//! split it off with a single column count; the engineered channels close the
//! row with the propagation speed last.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::record::IrregularDefectSeries;
use crate::error::{Error, Result};

pub const ENGINEERED_CHANNELS: [&str; 4] = [
    "elapsed_months",
    "is_interpolated",
    "steps_since_last_measurement",
    "propagation_speed",
];

/// Raw fields treated as integer-coded categories by default.
pub const DEFAULT_CATEGORICAL: [&str; 5] =
    ["sleeper_type", "rail_grade", "side", "uic_group", "rain_class"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalField {
    pub name: String,
    pub levels: Vec<i64>,
}

impl CategoricalField {
    fn one_hot(&self, value: Option<f64>, out: &mut Vec<f64>) {
        let code = value.map(|v| v.round() as i64);
        out.extend(self.levels.iter().map(|&l| f64::from(u8::from(Some(l) == code))));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub static_numeric: Vec<String>,
    pub static_categorical: Vec<CategoricalField>,
    pub dynamic_numeric: Vec<String>,
    pub dynamic_categorical: Vec<CategoricalField>,
}

/// Where the static block ends inside a feature row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub n_static: usize,
    pub n_dynamic: usize,
}

impl FeatureLayout {
    pub fn n_features(&self) -> usize {
        self.n_static + self.n_dynamic
    }

    /// Propagation speed is the final channel.
    pub fn speed_channel(&self) -> usize {
        self.n_features() - 1
    }
}

fn categorical(name: &str, codes: BTreeSet<i64>) -> CategoricalField {
    CategoricalField {
        name: name.to_string(),
        levels: codes.into_iter().collect(),
    }
}

impl FeatureSchema {
    /// Collects field names and categorical levels across `records`.
    pub fn infer(records: &[IrregularDefectSeries], categorical_names: &[String]) -> Result<Self> {
        let is_cat = |n: &str| categorical_names.iter().any(|c| c == n);
        let mut s_num = BTreeSet::new();
        let mut s_cat: BTreeMap<String, BTreeSet<i64>> = BTreeMap::new();
        let mut d_num = BTreeSet::new();
        let mut d_cat: BTreeMap<String, BTreeSet<i64>> = BTreeMap::new();
        for r in records {
            for (k, &v) in &r.static_features {
                if is_cat(k) {
                    s_cat.entry(k.clone()).or_default().insert(v.round() as i64);
                } else {
                    s_num.insert(k.clone());
                }
            }
            for rec in &r.dynamic_features {
                for (k, &v) in &rec.values {
                    if is_cat(k) {
                        d_cat.entry(k.clone()).or_default().insert(v.round() as i64);
                    } else {
                        d_num.insert(k.clone());
                    }
                }
            }
        }
        if let Some(clash) = s_num.iter().chain(s_cat.keys()).find(|n| {
            d_num.contains(*n) || d_cat.contains_key(*n)
        }) {
            return Err(Error::input(format!(
                "field `{clash}` appears as both static and dynamic"
            )));
        }
        Ok(Self {
            static_numeric: s_num.into_iter().collect(),
            static_categorical: s_cat.into_iter().map(|(n, c)| categorical(&n, c)).collect(),
            dynamic_numeric: d_num.into_iter().collect(),
            dynamic_categorical: d_cat.into_iter().map(|(n, c)| categorical(&n, c)).collect(),
        })
    }

    pub fn layout(&self) -> FeatureLayout {
        let onehot = |f: &[CategoricalField]| f.iter().map(|c| c.levels.len()).sum::<usize>();
        FeatureLayout {
            n_static: self.static_numeric.len() + onehot(&self.static_categorical),
            n_dynamic: self.dynamic_numeric.len()
                + onehot(&self.dynamic_categorical)
                + ENGINEERED_CHANNELS.len(),
        }
    }

    pub fn channel_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.static_numeric.clone();
        let expand = |names: &mut Vec<String>, cats: &[CategoricalField]| {
            for c in cats {
                names.extend(c.levels.iter().map(|l| format!("{}={l}", c.name)));
            }
        };
        expand(&mut names, &self.static_categorical);
        names.extend(self.dynamic_numeric.iter().cloned());
        expand(&mut names, &self.dynamic_categorical);
        names.extend(ENGINEERED_CHANNELS.iter().map(|s| s.to_string()));
        names
    }

    /// Static block of a feature row. Missing numeric fields become 0.
    pub fn static_row(&self, values: &BTreeMap<String, f64>) -> Vec<f64> {
        let mut row: Vec<f64> = self
            .static_numeric
            .iter()
            .map(|n| values.get(n).copied().unwrap_or(0.0))
            .collect();
        for c in &self.static_categorical {
            c.one_hot(values.get(&c.name).copied(), &mut row);
        }
        row
    }

    /// Raw dynamic block (without the engineered channels).
    pub fn dynamic_row(&self, values: &BTreeMap<String, f64>) -> Vec<f64> {
        let mut row: Vec<f64> = self
            .dynamic_numeric
            .iter()
            .map(|n| values.get(n).copied().unwrap_or(0.0))
            .collect();
        for c in &self.dynamic_categorical {
            c.one_hot(values.get(&c.name).copied(), &mut row);
        }
        row
    }
}
