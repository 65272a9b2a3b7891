use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numcore::{Activation, Adam, AdamConfig, Mlp, Tape, Tensor, Var};
use crate::{Error, Result};

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Clone, PartialEq)]
pub struct ActorConfig {
    pub hidden: Vec<usize>,
    pub log_std_init: f64,
    pub learning_rate: f64,
    pub max_grad_norm: Option<f64>,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32; 3],
            log_std_init: -0.5,
            learning_rate: 3e-4,
            max_grad_norm: None,
        }
    }
}

/// Action chosen by an actor.
#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    /// Clamped to `[-1, 1]`; this is what the environment receives.
    pub action: Vec<f64>,
    /// The Gaussian draw before clamping.
    pub raw: Vec<f64>,
    /// Log-density of `raw`.
    pub log_prob: f64,
}

/// Diagonal Gaussian policy over one agent's action from its local observation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianActor {
    pub mean_net: Mlp,
    /// `(1, action_dim)`, state independent.
    pub log_std: Tensor,
    pub(crate) adam: Adam,
}

/// Sum over action coordinates of the diagonal Gaussian log-density.
pub fn gaussian_log_prob(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((x, m), ls)| {
            let z = (x - m) * libm::exp(-ls);
            -0.5 * z * z - ls - HALF_LOG_2PI
        })
        .sum()
}

impl GaussianActor {
    /// The mean network's last layer starts at zero, so an untrained actor's
    /// mean action is exactly the zero (default) action.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, config: &ActorConfig, rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(action_dim);
        let mut mean_net = Mlp::new(&sizes, Activation::Tanh, Activation::Tanh, rng);
        let last = mean_net.layers_mut().last_mut().expect("non-empty");
        last.weight.data_mut().fill(0.0);
        last.bias.data_mut().fill(0.0);
        let log_std = Tensor::filled(&[1, action_dim], config.log_std_init);
        Self::from_parts(mean_net, log_std, config)
    }

    pub fn from_parts(mean_net: Mlp, log_std: Tensor, config: &ActorConfig) -> Self {
        let mut params = mean_net.params();
        params.push(&log_std);
        let adam = Adam::new(
            AdamConfig {
                max_grad_norm: config.max_grad_norm,
                ..AdamConfig::with_lr(config.learning_rate)
            },
            &params,
        );
        Self {
            mean_net,
            log_std,
            adam,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.mean_net.output_dim()
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if obs.len() != self.obs_dim() {
            return Err(Error::dim("actor observation", self.obs_dim(), obs.len()));
        }
        self.mean_net.forward_one(obs)
    }

    /// Samples (or, if `deterministic`, takes the mean of) the policy at `obs`.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R, deterministic: bool) -> Result<ActOutput> {
        let mean = self.mean(obs)?;
        let log_std = self.log_std.data();
        let raw: Vec<f64> = if deterministic {
            mean.clone()
        } else {
            mean.iter()
                .zip(log_std)
                .map(|(m, ls)| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + libm::exp(*ls) * z
                })
                .collect()
        };
        let log_prob = gaussian_log_prob(&raw, &mean, log_std);
        let action = raw.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
        Ok(ActOutput {
            action,
            raw,
            log_prob,
        })
    }

    /// Log-densities of each row of `raw` given each row of `obs`.
    pub fn log_probs(&self, obs: &Tensor, raw: &Tensor) -> Result<Vec<f64>> {
        let mean = self.mean_net.forward(obs)?;
        if raw.shape() != mean.shape() {
            return Err(Error::dim("actor raw actions", mean.len(), raw.len()));
        }
        Ok((0..mean.rows())
            .map(|t| gaussian_log_prob(raw.row(t), mean.row(t), self.log_std.data()))
            .collect())
    }

    /// Records `log π(raw | obs)` as a `(rows, 1)` tape node. Returns the
    /// parameter handles in `[mean_net..., log_std]` order and the node.
    pub(crate) fn record_log_probs(&self, tape: &mut Tape, obs: &Tensor, raw: &Tensor) -> Result<(Vec<Var>, Var)> {
        let rows = obs.rows();
        let bound = self.mean_net.bind(tape);
        let ls = tape.leaf(self.log_std.clone());
        let x = tape.leaf(obs.clone());
        let a = tape.leaf(raw.clone());
        let mean = bound.forward(tape, x)?;
        let diff = tape.sub(a, mean)?;
        let ls_rows = tape.broadcast_rows(ls, rows)?;
        let neg_ls = tape.scale(ls_rows, -1.0);
        let inv_std = tape.exp(neg_ls);
        let z = tape.mul(diff, inv_std)?;
        let z2 = tape.square(z);
        let quad = tape.scale(z2, -0.5);
        let per_dim = tape.sub(quad, ls_rows)?;
        let summed = tape.sum_cols(per_dim)?;
        let logp = tape.offset(summed, -(self.action_dim() as f64) * HALF_LOG_2PI);
        let mut params = bound.params().to_vec();
        params.push(ls);
        Ok((params, logp))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.mean_net.params();
        p.push(&self.log_std);
        p
    }

    pub(crate) fn apply_gradients(&mut self, grads: &[Tensor]) -> Result<()> {
        let mut params = self.mean_net.params_mut();
        params.push(&mut self.log_std);
        self.adam.step(&mut params, grads)
    }

    pub fn check_obs(&self, obs: &Tensor) -> Result<()> {
        if obs.cols() != self.obs_dim() {
            return Err(Error::Contract(format!(
                "actor expects observations of width {}, got {}",
                self.obs_dim(),
                obs.cols()
            )));
        }
        Ok(())
    }
}
