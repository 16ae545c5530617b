//! Dense f32 tensors and the named parameter store.
//!
//! Every trainable weight in the system lives in a [`ParameterStore`] under a
//! dot-separated ASCII name. Iteration order is always lexicographic so that
//! checkpoint bytes, RNG draws and gradient reductions are reproducible.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// Dense row-major f32 tensor. Scalars have an empty shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(Error::shape(format!(
                "data length {} does not match shape {:?} (= {})",
                data.len(),
                shape,
                len
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor { shape, data: vec![0.0; len] }
    }

    pub fn scalar(v: f32) -> Self {
        Tensor { shape: vec![], data: vec![v] }
    }

    pub fn vector(data: Vec<f32>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    /// Row-major matrix from nested rows; all rows must have equal length.
    pub fn matrix(rows: &[Vec<f32>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("ragged rows in matrix literal"));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Ok(Tensor { shape: vec![r, c], data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> f32 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f32] {
        assert_eq!(self.rank(), 2, "row() on non-matrix tensor");
        let c = self.shape[1];
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Named parameter collection with deterministic (lexicographic) iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    entries: BTreeMap<String, Tensor>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.entries.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Names in lexicographic order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar components across all tensors.
    pub fn component_count(&self) -> usize {
        self.entries.values().map(|t| t.len()).sum()
    }
}

/// Draws a fresh tensor with entries uniform in [-0.08, 0.08].
///
/// All parameters, including biases, are initialized this way. The draw
/// order is the caller's construction order, so a fixed seed and a fixed
/// construction sequence give bitwise-identical stores.
pub struct UniformInit {
    rng: ChaCha20Rng,
}

pub const INIT_RANGE: f32 = 0.08;

impl UniformInit {
    pub fn new(seed: u64) -> Self {
        UniformInit { rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    pub fn tensor(&mut self, shape: Vec<usize>) -> Tensor {
        let len: usize = shape.iter().product();
        let data = (0..len)
            .map(|_| self.rng.gen_range(-INIT_RANGE..=INIT_RANGE))
            .collect();
        Tensor { shape, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_len_must_match_shape() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn store_iterates_lexicographically() {
        let mut store = ParameterStore::new();
        store.insert("b.x", Tensor::scalar(1.0));
        store.insert("a.y", Tensor::scalar(2.0));
        store.insert("a.b", Tensor::scalar(3.0));
        let names: Vec<&str> = store.names().collect();
        assert_eq!(names, vec!["a.b", "a.y", "b.x"]);
    }

    #[test]
    fn uniform_init_is_seed_deterministic_and_in_range() {
        let a = UniformInit::new(7).tensor(vec![64]);
        let b = UniformInit::new(7).tensor(vec![64]);
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() <= INIT_RANGE));
        let c = UniformInit::new(8).tensor(vec![64]);
        assert_ne!(a, c);
    }
}
