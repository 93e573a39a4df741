use crate::{Scalar, Tensor};
use std::collections::HashMap;

/// Handle into a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

pub struct ParamEntry<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Vec<T>,
    /// Trainable parameters get gradients and optimizer updates; buffers
    /// (e.g. batch-norm running statistics) are persisted but never stepped.
    pub trainable: bool,
}

/// Owns the persistent tensors of a model between training steps.
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>) -> ParamId {
        self.insert(name, value, true)
    }

    pub fn add_buffer(&mut self, name: &str, value: Tensor<T>) -> ParamId {
        self.insert(name, value, false)
    }

    fn insert(&mut self, name: &str, value: Tensor<T>, trainable: bool) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name:?}"
        );
        let id = ParamId(self.entries.len());
        let grad = vec![T::zero(); if trainable { value.numel() } else { 0 }];
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            grad,
            trainable,
        });
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    pub fn entry_mut(&mut self, id: ParamId) -> &mut ParamEntry<T> {
        &mut self.entries[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[T] {
        &self.entries[id.0].grad
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry<T>)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, delta: &[T]) {
        let entry = &mut self.entries[id.0];
        assert!(entry.trainable, "gradient for non-trainable {:?}", entry.name);
        debug_assert_eq!(entry.grad.len(), delta.len());
        for (g, d) in entry.grad.iter_mut().zip(delta) {
            *g += *d;
        }
    }

    pub fn zero_grads(&mut self, ids: &[ParamId]) {
        for &id in ids {
            for g in self.entries[id.0].grad.iter_mut() {
                *g = T::zero();
            }
        }
    }

    pub fn zero_all_grads(&mut self) {
        for e in self.entries.iter_mut() {
            for g in e.grad.iter_mut() {
                *g = T::zero();
            }
        }
    }

    /// Deep copy, e.g. for read-only evaluation off the training thread.
    pub fn clone_store(&self) -> ParamStore<T> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    value: e.value.clone(),
                    grad: e.grad.clone(),
                    trainable: e.trainable,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for e in &self.entries {
            if e.trainable {
                out.add(&e.name, e.value.cast());
            } else {
                out.add_buffer(&e.name, e.value.cast());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_handles_stable() {
        let mut s = ParamStore::<f64>::new();
        let a = s.add("w", Tensor::zeros(vec![2, 2]));
        let b = s.add_buffer("running_mean", Tensor::zeros(vec![2]));
        assert_eq!(s.lookup("w"), Some(a));
        assert_eq!(s.lookup("running_mean"), Some(b));
        assert!(s.entry(a).trainable);
        assert!(!s.entry(b).trainable);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_name_rejected() {
        let mut s = ParamStore::<f64>::new();
        s.add("w", Tensor::zeros(vec![1]));
        s.add("w", Tensor::zeros(vec![1]));
    }
}
