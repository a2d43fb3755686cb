use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::nn::tensor::{Scalar, Tensor};

/// Handle to a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named tensors.
///
/// Gradients and optimiser moments are stores with the same layout, so a
/// [`ParamId`] addresses the matching entry in each of them.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Registers a tensor. Panics on a duplicate name.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar elements.
    pub fn num_elements(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// A store with the same names and shapes, filled with zeros.
    pub fn zeros_like(&self) -> Self {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            index: self.index.clone(),
        }
    }

    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(T::zero()));
    }

    /// Same layout check used before mixing stores.
    pub fn same_layout(&self, other: &ParamStore<T>) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape() == b.shape())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Element `offset` of the flattened concatenation of all tensors.
    pub fn flat_get(&self, offset: usize) -> T {
        let (t, i) = self.locate(offset);
        self.tensors[t].data()[i]
    }

    pub fn flat_set(&mut self, offset: usize, v: T) {
        let (t, i) = self.locate(offset);
        self.tensors[t].data_mut()[i] = v;
    }

    /// `(parameter name, index within it)` of a flat offset.
    pub fn flat_name(&self, offset: usize) -> (&str, usize) {
        let (t, i) = self.locate(offset);
        (&self.names[t], i)
    }

    fn locate(&self, mut offset: usize) -> (usize, usize) {
        for (t, tensor) in self.tensors.iter().enumerate() {
            if offset < tensor.len() {
                return (t, offset);
            }
            offset -= tensor.len();
        }
        panic!("flat offset out of range");
    }

    /// SHA-256 over names, shapes and values, as a hex string.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.iter() {
            h.update(name.as_bytes());
            for &d in t.shape() {
                h.update((d as u64).to_le_bytes());
            }
            for &v in t.data() {
                h.update(v.as_f64().to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_addressing_spans_tensors() {
        let mut s = ParamStore::<f32>::new();
        s.add("a", Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        s.add("b", Tensor::from_vec(&[3], vec![3.0, 4.0, 5.0]).unwrap());
        assert_eq!(s.num_elements(), 5);
        assert_eq!(s.flat_get(3), 4.0);
        assert_eq!(s.flat_name(3), ("b", 1));
        s.flat_set(0, 9.0);
        assert_eq!(s.by_name("a").unwrap().data(), &[9.0, 2.0]);
    }

    #[test]
    fn checksum_tracks_values() {
        let mut s = ParamStore::<f64>::new();
        let id = s.add("w", Tensor::zeros(&[4]));
        let c0 = s.checksum();
        assert_eq!(c0, s.clone().checksum());
        s.get_mut(id).data_mut()[2] = 1e-9;
        assert_ne!(c0, s.checksum());
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn duplicate_names_panic() {
        let mut s = ParamStore::<f32>::new();
        s.add("w", Tensor::zeros(&[1]));
        s.add("w", Tensor::zeros(&[1]));
    }
}
