use alloc::vec;
use alloc::vec::Vec;

use super::{finished_episode, EnvSpec, MultiAgentEnv, Observation, StepResult};
use crate::{Error, Result};

/// One-step team game with reward `sum_i w_i (1 - (a_i - g_i)^2)`.
///
/// Each agent observes its own target, so the global state is the target vector.
#[derive(Debug, Clone)]
pub struct AdditiveTeam {
    weights: Vec<f64>,
    targets: Vec<f64>,
    spec: EnvSpec,
    done: bool,
}

impl AdditiveTeam {
    pub fn new(weights: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if weights.len() != targets.len() || weights.is_empty() {
            return Err(Error::dim("AdditiveTeam targets", weights.len(), targets.len()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::Config("AdditiveTeam weights must be positive".into()));
        }
        let n = weights.len();
        Ok(Self {
            weights,
            targets,
            spec: EnvSpec {
                n_agents: n,
                obs_dims: vec![1; n],
                action_dims: vec![1; n],
                max_episode_steps: 1,
            },
            done: false,
        })
    }

    /// Four agents, `w = (1, 2, 3, 4)`, every target `0.5`.
    pub fn default_team() -> Self {
        Self::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.5; 4]).expect("valid defaults")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Reward for a (clamped) joint action.
    pub fn reward_of(&self, actions: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(&self.targets)
            .zip(actions)
            .map(|((w, g), a)| w * (1.0 - (a - g) * (a - g)))
            .sum()
    }

    /// Reward obtained when every agent plays zero.
    pub fn zero_action_reward(&self) -> f64 {
        self.reward_of(&vec![0.0; self.weights.len()])
    }

    /// Best achievable reward, `sum_i w_i`, reached at `a = g` (for targets in `[-1, 1]`).
    pub fn optimal_reward(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Closed-form credit of agent `i` relative to the zero default action.
    pub fn marginal_credit(&self, i: usize, action: f64) -> f64 {
        let (w, g) = (self.weights[i], self.targets[i]);
        w * ((1.0 - (action - g) * (action - g)) - (1.0 - g * g))
    }

    fn observation(&self) -> Observation {
        Observation {
            state: self.targets.clone(),
            per_agent: self.spec.split_state(&self.targets),
        }
    }
}

impl MultiAgentEnv for AdditiveTeam {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Observation {
        self.done = false;
        self.observation()
    }

    fn step(&mut self, joint_action: &[Vec<f64>]) -> Result<StepResult> {
        if self.done {
            return Err(finished_episode());
        }
        let a = self.spec.clamp_action(joint_action)?;
        let flat: Vec<f64> = a.iter().map(|x| x[0]).collect();
        let reward = self.reward_of(&flat);
        self.done = true;
        let obs = self.observation();
        Ok(StepResult {
            next_state: obs.state,
            per_agent_obs: obs.per_agent,
            reward,
            done: true,
            terminal: true,
            info: Vec::new(),
        })
    }
}
