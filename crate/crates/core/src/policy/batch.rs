use alloc::format;
use alloc::vec::Vec;

use crate::numcore::Tensor;
use crate::{Error, Result};

/// Concatenates per-agent vectors into one flat vector.
pub fn flatten(parts: &[Vec<f64>]) -> Vec<f64> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

/// One environment step as recorded during a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub next_state: Vec<f64>,
    pub obs: Vec<Vec<f64>>,
    /// Executed (clamped) actions.
    pub actions: Vec<Vec<f64>>,
    /// Gaussian samples before clamping; log-probs refer to these.
    pub raw_actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub terminal: bool,
}

/// Trajectory data of one iteration, indexed by timestep.
///
/// `dones[t]` marks the end of a contiguous segment: an episode end or the
/// point where collection stopped. `terminals[t]` marks true terminal states,
/// after which nothing is bootstrapped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub n_agents: usize,
    pub states: Vec<Vec<f64>>,
    pub next_states: Vec<Vec<f64>>,
    pub obs: Vec<Vec<Vec<f64>>>,
    pub actions: Vec<Vec<Vec<f64>>>,
    pub raw_actions: Vec<Vec<Vec<f64>>>,
    pub log_probs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub terminals: Vec<bool>,
    /// `V(s_t)` under the behaviour critic.
    pub values: Vec<f64>,
    /// `V(s_{t+1})` under the behaviour critic, zero after terminal states.
    pub next_values: Vec<f64>,
    pub returns: Vec<f64>,
    /// `advantages[t][i]`; shared methods repeat one value across agents.
    pub advantages: Vec<Vec<f64>>,
}

impl RolloutBatch {
    pub fn new(n_agents: usize) -> Self {
        Self {
            n_agents,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        for (name, len) in [
            ("obs", t.obs.len()),
            ("actions", t.actions.len()),
            ("raw_actions", t.raw_actions.len()),
            ("log_probs", t.log_probs.len()),
        ] {
            if len != self.n_agents {
                return Err(Error::Contract(format!(
                    "transition {name} has {len} agents, batch expects {}",
                    self.n_agents
                )));
            }
        }
        self.states.push(t.state);
        self.next_states.push(t.next_state);
        self.obs.push(t.obs);
        self.actions.push(t.actions);
        self.raw_actions.push(t.raw_actions);
        self.log_probs.push(t.log_probs);
        self.rewards.push(t.reward);
        self.dones.push(t.done);
        self.terminals.push(t.terminal);
        Ok(())
    }

    /// Marks the last step as a segment end so returns and GAE stop there.
    pub fn close_segment(&mut self) {
        if let Some(d) = self.dones.last_mut() {
            *d = true;
        }
    }

    /// Flattened joint action at step `t`.
    pub fn joint_action(&self, t: usize) -> Vec<f64> {
        flatten(&self.actions[t])
    }

    /// `(len, state_dim)` matrix of `s_t`.
    pub fn state_matrix(&self) -> Result<Tensor> {
        let width = self.states.first().map_or(0, Vec::len);
        Tensor::from_rows(&self.states, width)
    }

    /// `(len, state_dim)` matrix of `s_{t+1}`.
    pub fn next_state_matrix(&self) -> Result<Tensor> {
        let width = self.next_states.first().map_or(0, Vec::len);
        Tensor::from_rows(&self.next_states, width)
    }

    /// `(len, state_dim + joint_action_dim)` matrix of `s_t ⊕ a_t`.
    pub fn state_action_matrix(&self) -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = (0..self.len())
            .map(|t| {
                let mut r = self.states[t].clone();
                r.extend(self.joint_action(t));
                r
            })
            .collect();
        let width = rows.first().map_or(0, Vec::len);
        Tensor::from_rows(&rows, width)
    }

    /// `(len, obs_dim_i)` matrix of agent `i`'s observations.
    pub fn agent_obs_matrix(&self, i: usize) -> Result<Tensor> {
        let rows: Vec<&[f64]> = self.obs.iter().map(|o| o[i].as_slice()).collect();
        let width = rows.first().map_or(0, |r| r.len());
        Tensor::from_rows(&rows, width)
    }

    /// `(len, action_dim_i)` matrix of agent `i`'s pre-clamp samples.
    pub fn agent_raw_action_matrix(&self, i: usize) -> Result<Tensor> {
        let rows: Vec<&[f64]> = self.raw_actions.iter().map(|a| a[i].as_slice()).collect();
        let width = rows.first().map_or(0, |r| r.len());
        Tensor::from_rows(&rows, width)
    }

    /// Discounted returns `G_t = r_t + γ G_{t+1}` inside a segment. A segment
    /// that ends without a terminal state bootstraps from `next_values`.
    pub fn compute_returns(&mut self, gamma: f64) -> Result<()> {
        let n = self.len();
        if self.next_values.len() != n {
            return Err(Error::dim("returns next_values", n, self.next_values.len()));
        }
        let mut returns = alloc::vec![0.0; n];
        let mut acc = 0.0;
        for t in (0..n).rev() {
            if self.dones[t] {
                acc = if self.terminals[t] { 0.0 } else { self.next_values[t] };
            }
            acc = self.rewards[t] + gamma * acc;
            returns[t] = acc;
        }
        self.returns = returns;
        Ok(())
    }

    /// Per-agent advantage column `i`.
    pub fn agent_advantages(&self, i: usize) -> Vec<f64> {
        self.advantages.iter().map(|row| row[i]).collect()
    }
}
