use alloc::format;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global-norm gradient clipping; off when `None`.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_grad_norm: None,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Adam with bias correction; one moment pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let sq: f64 = grads
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|v| v * v)
        .sum();
    let norm = libm::sqrt(sq);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[&Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }

    /// Restores a saved optimizer state.
    pub fn from_parts(config: AdamConfig, step: u64, first: Vec<Tensor>, second: Vec<Tensor>) -> Result<Self> {
        if first.len() != second.len() {
            return Err(Error::dim("Adam moments", first.len(), second.len()));
        }
        for (m, v) in first.iter().zip(&second) {
            if m.shape() != v.shape() {
                return Err(Error::contract("Adam moment shapes differ"));
            }
        }
        Ok(Self {
            config,
            step,
            first,
            second,
        })
    }

    /// Applies one update. A non-finite gradient rejects the whole step and
    /// leaves both parameters and optimizer state untouched.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::dim("Adam params", self.first.len(), params.len()));
        }
        if grads.len() != params.len() {
            return Err(Error::dim("Adam grads", params.len(), grads.len()));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[i].shape() {
                return Err(Error::Contract(format!(
                    "Adam: parameter {i} has shape {:?}, gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if let Some(bad) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter {i} at element {bad} is {}",
                    g.data()[bad]
                )));
            }
        }

        let mut clipped;
        let grads = match self.config.max_grad_norm {
            Some(max) => {
                clipped = grads.to_vec();
                clip_global_norm(&mut clipped, max);
                &clipped[..]
            }
            None => grads,
        };

        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let bias1 = 1.0 - libm::pow(c.beta1, t);
        let bias2 = 1.0 - libm::pow(c.beta2, t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for j in 0..pd.len() {
                let gj = g.data()[j];
                md[j] = c.beta1 * md[j] + (1.0 - c.beta1) * gj;
                vd[j] = c.beta2 * vd[j] + (1.0 - c.beta2) * gj * gj;
                let m_hat = md[j] / bias1;
                let v_hat = vd[j] / bias2;
                pd[j] -= c.learning_rate * m_hat / (libm::sqrt(v_hat) + c.epsilon);
            }
        }
        Ok(())
    }
}
