//! Adam with bias correction over a fixed set of parameter tensors.

use super::graph::{Gradients, ParamId, ParamStore};
use super::tensor::Tensor;
use super::NumericError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for the parameters one optimizer owns.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    params: Vec<ParamId>,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore, params: &[ParamId]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|&id| Tensor::zeros(store.get(id).shape()))
                .collect()
        };
        AdamState {
            config,
            step: 0,
            params: params.to_vec(),
            first: zeros(),
            second: zeros(),
        }
    }

    /// Rebuilds a state from serialized parts, checking shapes against the store.
    pub fn from_parts(
        config: AdamConfig,
        step: u64,
        store: &ParamStore,
        params: Vec<ParamId>,
        first: Vec<Tensor>,
        second: Vec<Tensor>,
    ) -> Result<Self, NumericError> {
        if first.len() != params.len() || second.len() != params.len() {
            return Err(NumericError::Optimizer(format!(
                "{} parameters but {} / {} moment tensors",
                params.len(),
                first.len(),
                second.len()
            )));
        }
        for ((&id, m), v) in params.iter().zip(&first).zip(&second) {
            let shape = store.get(id).shape();
            if m.shape() != shape || v.shape() != shape {
                return Err(NumericError::ShapeMismatch {
                    node: format!("adam state for {}", store.name(id)),
                    expected: format!("{shape:?}"),
                    actual: if m.shape() != shape { m.shape() } else { v.shape() }.to_vec(),
                });
            }
        }
        Ok(AdamState {
            config,
            step,
            params,
            first,
            second,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.second
    }

    /// One update of every owned parameter. Parameters absent from `grads`
    /// are treated as having a zero gradient.
    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<(), NumericError> {
        for &id in &self.params {
            if let Some(g) = grads.get(id) {
                if g.shape() != store.get(id).shape() {
                    return Err(NumericError::ShapeMismatch {
                        node: format!("gradient for {}", store.name(id)),
                        expected: format!("{:?}", store.get(id).shape()),
                        actual: g.shape().to_vec(),
                    });
                }
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - (beta1 as f64).powi(t);
        let bc2 = 1.0 - (beta2 as f64).powi(t);
        for (i, &id) in self.params.iter().enumerate() {
            let grad = grads.get(id).map(Tensor::data);
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let p = store.get_mut(id).data_mut();
            for j in 0..p.len() {
                let g = grad.map_or(0.0, |g| g[j]);
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                let m_hat = m[j] as f64 / bc1;
                let v_hat = v[j] as f64 / bc2;
                p[j] -= (lr as f64 * m_hat / (v_hat.sqrt() + eps as f64)) as f32;
            }
        }
        Ok(())
    }
}
