//! AdaDelta: per-component accumulators of squared gradients and squared
//! updates.
//!
//! ```text
//! Eg  = rho * Eg  + (1 - rho) * g²
//! dx  = -sqrt(Edx + eps) / sqrt(Eg + eps) * g
//! Edx = rho * Edx + (1 - rho) * dx²
//! p  += dx
//! ```

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tape::Value;
use crate::tensor::{ParameterStore, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub rho: f32,
    pub epsilon: f32,
    acc_grad: BTreeMap<String, Vec<f32>>,
    acc_update: BTreeMap<String, Vec<f32>>,
}

impl OptimizerState {
    pub fn new(params: &ParameterStore, rho: f64, epsilon: f64) -> Self {
        let mut acc_grad = BTreeMap::new();
        let mut acc_update = BTreeMap::new();
        for (name, tensor) in params.iter() {
            acc_grad.insert(name.to_string(), vec![0.0; tensor.len()]);
            acc_update.insert(name.to_string(), vec![0.0; tensor.len()]);
        }
        OptimizerState { rho: rho as f32, epsilon: epsilon as f32, acc_grad, acc_update }
    }

    /// Applies one AdaDelta update in place.
    pub fn step(
        &mut self,
        params: &mut ParameterStore,
        grads: &BTreeMap<String, Value<f32>>,
    ) -> Result<()> {
        let rho = self.rho;
        let eps = self.epsilon;
        for (name, grad) in grads {
            let tensor = params
                .get_mut(name)
                .ok_or_else(|| Error::usage(format!("gradient for unknown parameter `{name}`")))?;
            if tensor.len() != grad.data.len() {
                return Err(Error::shape(format!("gradient shape mismatch for `{name}`")));
            }
            let eg = self.acc_grad.get_mut(name).expect("accumulator exists");
            let edx = self.acc_update.get_mut(name).expect("accumulator exists");
            for (((p, &g), eg_i), edx_i) in
                tensor.data_mut().iter_mut().zip(&grad.data).zip(eg).zip(edx)
            {
                *eg_i = rho * *eg_i + (1.0 - rho) * g * g;
                let dx = -((*edx_i + eps).sqrt() / (*eg_i + eps).sqrt()) * g;
                *edx_i = rho * *edx_i + (1.0 - rho) * dx * dx;
                *p += dx;
            }
        }
        Ok(())
    }

    /// Flattens accumulators into checkpoint tensors under `opt.`.
    pub fn to_tensors(&self, params: &ParameterStore) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(2 * self.acc_grad.len() + 2);
        out.push(("opt.rho".to_string(), Tensor::scalar(self.rho)));
        out.push(("opt.eps".to_string(), Tensor::scalar(self.epsilon)));
        for (name, data) in &self.acc_grad {
            let shape = params.get(name).map(|t| t.shape().to_vec()).unwrap_or(vec![data.len()]);
            out.push((format!("opt.g.{name}"), Tensor::new(shape, data.clone()).unwrap()));
        }
        for (name, data) in &self.acc_update {
            let shape = params.get(name).map(|t| t.shape().to_vec()).unwrap_or(vec![data.len()]);
            out.push((format!("opt.dx.{name}"), Tensor::new(shape, data.clone()).unwrap()));
        }
        out
    }

    /// Rebuilds accumulators from checkpoint tensors; missing entries fall
    /// back to zeros.
    pub fn from_tensors(params: &ParameterStore, tensors: &ParameterStore) -> Self {
        let rho = tensors.get("opt.rho").map_or(0.95, Tensor::item);
        let epsilon = tensors.get("opt.eps").map_or(1e-6, Tensor::item);
        let mut state = OptimizerState::new(params, rho as f64, epsilon as f64);
        for (name, slot) in state.acc_grad.iter_mut() {
            if let Some(t) = tensors.get(&format!("opt.g.{name}")) {
                slot.copy_from_slice(t.data());
            }
        }
        for (name, slot) in state.acc_update.iter_mut() {
            if let Some(t) = tensors.get(&format!("opt.dx.{name}")) {
                slot.copy_from_slice(t.data());
            }
        }
        state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_one(data: Vec<f32>) -> ParameterStore {
        let mut store = ParameterStore::new();
        store.insert("p", Tensor::vector(data));
        store
    }

    fn grads_one(data: Vec<f32>) -> BTreeMap<String, Value<f32>> {
        let mut grads = BTreeMap::new();
        grads.insert("p".to_string(), Value { shape: vec![data.len()], data });
        grads
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_accumulators() {
        let mut params = store_one(vec![1.0, -2.0]);
        let mut opt = OptimizerState::new(&params, 0.9, 1e-6);
        // Charge the accumulators first.
        opt.step(&mut params, &grads_one(vec![0.5, -0.25])).unwrap();
        let before = params.clone();
        let eg_before = opt.acc_grad["p"].clone();
        opt.step(&mut params, &grads_one(vec![0.0, 0.0])).unwrap();
        assert_eq!(params, before);
        for (after, before) in opt.acc_grad["p"].iter().zip(&eg_before) {
            assert!((after - 0.9 * before).abs() < 1e-12);
        }
    }

    #[test]
    fn first_step_with_rho_zero_matches_hand_evaluation() {
        // rho = 0: Eg = g², dx = -sqrt(eps)/sqrt(g² + eps) * g.
        let g = 0.3f32;
        let eps = 1e-6f32;
        let mut params = store_one(vec![2.0]);
        let mut opt = OptimizerState::new(&params, 0.0, eps as f64);
        opt.step(&mut params, &grads_one(vec![g])).unwrap();
        let expected_dx = -(eps.sqrt() / (g * g + eps).sqrt()) * g;
        assert!((params.get("p").unwrap().data()[0] - (2.0 + expected_dx)).abs() < 1e-9);
    }

    #[test]
    fn update_opposes_gradient_sign() {
        let mut params = store_one(vec![0.0, 0.0, 0.0]);
        let mut opt = OptimizerState::new(&params, 0.95, 1e-6);
        opt.step(&mut params, &grads_one(vec![1.0, -2.0, 0.5])).unwrap();
        let p = params.get("p").unwrap().data();
        assert!(p[0] < 0.0 && p[1] > 0.0 && p[2] < 0.0);
    }

    #[test]
    fn accumulators_round_trip_through_tensors() {
        let mut params = store_one(vec![1.0, 2.0]);
        let mut opt = OptimizerState::new(&params, 0.9, 1e-5);
        opt.step(&mut params, &grads_one(vec![0.1, 0.2])).unwrap();
        let mut tensors = ParameterStore::new();
        for (name, t) in opt.to_tensors(&params) {
            tensors.insert(name, t);
        }
        let back = OptimizerState::from_tensors(&params, &tensors);
        assert_eq!(back, opt);
    }
}
