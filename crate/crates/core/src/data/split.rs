use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const MIN_DEFECTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignment: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn get(&self, defect_id: &str) -> Option<Split> {
        self.assignment.get(defect_id).copied()
    }

    pub fn count(&self, split: Split) -> usize {
        self.assignment.values().filter(|&&s| s == split).count()
    }

    pub fn ids(&self, split: Split) -> impl Iterator<Item = &str> {
        self.assignment
            .iter()
            .filter(move |(_, &s)| s == split)
            .map(|(id, _)| id.as_str())
    }
}

/// Shuffles the ids with the split stream of `seed` and cuts them 60/20/20.
///
/// Ids are sorted before shuffling so the result does not depend on input
/// order. Duplicate ids are an error.
pub fn split_by_defect<S: AsRef<str>>(defect_ids: &[S], seed: u64) -> Result<SplitAssignment> {
    let mut ids: Vec<&str> = defect_ids.iter().map(AsRef::as_ref).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::input(format!("duplicate defect id `{}`", w[0])));
    }
    let n = ids.len();
    if n < MIN_DEFECTS {
        return Err(Error::input(format!(
            "need at least {MIN_DEFECTS} defects to split, got {n}"
        )));
    }
    ids.shuffle(&mut rng::stream(seed, rng::SPLIT, 0));
    let n_train = (0.6 * n as f64).round() as usize;
    let n_val = (0.2 * n as f64).round() as usize;
    let assignment = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
            (id.to_string(), split)
        })
        .collect();
    Ok(SplitAssignment { assignment })
}
