use std::collections::HashMap;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors with one gradient buffer per parameter.
///
/// Insertion order is preserved, so iteration (and therefore serialization
/// and optimizer updates) is deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    lookup: HashMap<String, ParamId>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.lookup.contains_key(&name) {
            return Err(Error::config(format!("duplicate parameter `{name}`")));
        }
        let id = ParamId(self.values.len());
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.lookup.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of scalar weights.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &Tensor) {
        self.grads[id.0].add_assign(grad);
    }

    pub(crate) fn param_and_grad_mut(&mut self, id: ParamId) -> (&mut Tensor, &Tensor) {
        (&mut self.values[id.0], &self.grads[id.0])
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// Euclidean norm over every gradient entry.
    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Replaces a parameter's value, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
        if self.values[id.0].shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                op: "set parameter",
                lhs: self.values[id.0].shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        self.values[id.0] = value;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grads_align_and_reset() {
        let mut store = ParameterStore::new();
        let a = store.insert("a", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let b = store
            .insert("b", Tensor::matrix(2, 3, vec![0.0; 6]).unwrap())
            .unwrap();
        assert!(store.insert("a", Tensor::scalar(0.0)).is_err());
        for id in store.ids() {
            assert_eq!(store.grad(id).shape(), store.value(id).shape());
        }
        store.accumulate_grad(a, &Tensor::vector(vec![3.0, 4.0]));
        assert_eq!(store.grad_norm(), 5.0);
        store.zero_grads();
        assert!(store.grad(a).data().iter().all(|&g| g == 0.0));
        assert_eq!(store.num_scalars(), 8);
        assert_eq!(store.name(b), "b");
    }
}
