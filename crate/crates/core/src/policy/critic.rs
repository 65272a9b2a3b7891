use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::numcore::{fit_mse, Activation, Adam, AdamConfig, Mlp, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CriticConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32; 3],
            learning_rate: 1e-3,
        }
    }
}

/// Scalar regressor shared by the state-value and action-value critics.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub net: Mlp,
    adam: Adam,
}

impl ValueNet {
    fn new<R: Rng + ?Sized>(input: usize, config: &CriticConfig, rng: &mut R) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(1);
        let net = Mlp::new(&sizes, Activation::Tanh, Activation::Identity, rng);
        Self::from_net(net, config.learning_rate)
    }

    fn from_net(net: Mlp, learning_rate: f64) -> Self {
        let adam = Adam::new(AdamConfig::with_lr(learning_rate), &net.params());
        Self { net, adam }
    }

    fn eval(&self, inputs: &Tensor) -> Result<Vec<f64>> {
        Ok(self.net.forward(inputs)?.into_data())
    }

    fn regress<R: Rng + ?Sized>(
        &mut self,
        inputs: &Tensor,
        targets: &[f64],
        epochs: usize,
        minibatch: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if inputs.rows() != targets.len() {
            return Err(Error::dim("critic targets", inputs.rows(), targets.len()));
        }
        if targets.is_empty() || epochs == 0 {
            return Ok(Vec::new());
        }
        let y = Tensor::matrix(targets.len(), 1, targets.to_vec())?;
        fit_mse(&mut self.net, &mut self.adam, inputs, &y, epochs, minibatch, rng)
    }
}

/// Centralized state-value critic `V(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic(pub ValueNet);

impl Critic {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, config: &CriticConfig, rng: &mut R) -> Self {
        Self(ValueNet::new(state_dim, config, rng))
    }

    pub fn from_net(net: Mlp, learning_rate: f64) -> Self {
        Self(ValueNet::from_net(net, learning_rate))
    }

    pub fn net(&self) -> &Mlp {
        &self.0.net
    }

    pub fn state_dim(&self) -> usize {
        self.0.net.input_dim()
    }

    /// `V` for each row of a `(rows, state_dim)` matrix.
    pub fn values(&self, states: &Tensor) -> Result<Vec<f64>> {
        self.0.eval(states)
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.values(&Tensor::row_vector(state))?[0])
    }
}

/// Centralized action-value critic `Q(s, a)` on the flattened joint action.
#[derive(Debug, Clone, PartialEq)]
pub struct QCritic(pub ValueNet);

impl QCritic {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        config: &CriticConfig,
        rng: &mut R,
    ) -> Self {
        Self(ValueNet::new(state_dim + action_dim, config, rng))
    }

    pub fn from_net(net: Mlp, learning_rate: f64) -> Self {
        Self(ValueNet::from_net(net, learning_rate))
    }

    pub fn net(&self) -> &Mlp {
        &self.0.net
    }

    pub fn input_dim(&self) -> usize {
        self.0.net.input_dim()
    }

    /// `Q` for each row of a `(rows, state_dim + action_dim)` matrix.
    pub fn values(&self, state_actions: &Tensor) -> Result<Vec<f64>> {
        self.0.eval(state_actions)
    }
}

/// Regresses `V(s_t)` onto `returns`; returns the per-epoch training loss.
pub fn critic_update<R: Rng + ?Sized>(
    critic: &mut Critic,
    states: &Tensor,
    returns: &[f64],
    epochs: usize,
    minibatch: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    critic.0.regress(states, returns, epochs, minibatch, rng)
}

/// Regresses `Q(s_t, a_t)` onto `returns`; returns the per-epoch training loss.
pub fn q_critic_update<R: Rng + ?Sized>(
    q: &mut QCritic,
    state_actions: &Tensor,
    returns: &[f64],
    epochs: usize,
    minibatch: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    q.0.regress(state_actions, returns, epochs, minibatch, rng)
}
