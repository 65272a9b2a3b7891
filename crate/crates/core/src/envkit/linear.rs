use alloc::vec;
use alloc::vec::Vec;

use super::{finished_episode, EnvSpec, MultiAgentEnv, Observation, StepResult};
use crate::{Error, Result};

/// Noise-free linear system `s' = A s + B a` with reward `-|s|^2 - 0.1 |a|^2`.
///
/// The reward is computed on the pre-transition state, so it is a function of
/// `(s_t, a_t)` only. Every episode starts from the same state.
#[derive(Debug, Clone)]
pub struct LinearTeam {
    a: Vec<f64>,
    b: Vec<f64>,
    initial: Vec<f64>,
    state: Vec<f64>,
    spec: EnvSpec,
    t: usize,
}

impl LinearTeam {
    /// `a` is `(d, d)` and `b` is `(d, m)`, both row-major, where `d` is the sum
    /// of `obs_dims` and `m` the number of agents (one action coordinate each).
    pub fn new(
        a: Vec<f64>,
        b: Vec<f64>,
        initial: Vec<f64>,
        obs_dims: Vec<usize>,
        horizon: usize,
    ) -> Result<Self> {
        let d: usize = obs_dims.iter().sum();
        let m = obs_dims.len();
        if a.len() != d * d {
            return Err(Error::dim("LinearTeam A", d * d, a.len()));
        }
        if b.len() != d * m {
            return Err(Error::dim("LinearTeam B", d * m, b.len()));
        }
        if initial.len() != d {
            return Err(Error::dim("LinearTeam initial state", d, initial.len()));
        }
        Ok(Self {
            a,
            b,
            state: initial.clone(),
            initial,
            spec: EnvSpec {
                n_agents: m,
                obs_dims,
                action_dims: vec![1; m],
                max_episode_steps: horizon,
            },
            t: 0,
        })
    }

    /// Two agents observing two coordinates each, horizon 50.
    pub fn default_team() -> Self {
        #[rustfmt::skip]
        let a = vec![
            0.90, 0.20, 0.00, 0.00,
           -0.20, 0.90, 0.00, 0.05,
            0.00, 0.00, 0.80, 0.10,
            0.10, 0.00, 0.00, 0.85,
        ];
        #[rustfmt::skip]
        let b = vec![
            0.50, 0.00,
            0.00, 0.10,
            0.10, 0.30,
            0.00, 0.50,
        ];
        Self::new(a, b, vec![1.0, -0.5, 0.5, 1.0], vec![2, 2], 50).expect("valid defaults")
    }

    pub fn state_dim(&self) -> usize {
        self.initial.len()
    }

    /// `A s + B a`.
    pub fn transition(&self, s: &[f64], actions: &[f64]) -> Vec<f64> {
        let d = self.state_dim();
        let m = self.spec.n_agents;
        (0..d)
            .map(|r| {
                let from_state: f64 = (0..d).map(|c| self.a[r * d + c] * s[c]).sum();
                let from_action: f64 = (0..m).map(|c| self.b[r * m + c] * actions[c]).sum();
                from_state + from_action
            })
            .collect()
    }

    pub fn reward_of(s: &[f64], actions: &[f64]) -> f64 {
        let s2: f64 = s.iter().map(|x| x * x).sum();
        let a2: f64 = actions.iter().map(|x| x * x).sum();
        -s2 - 0.1 * a2
    }

    fn observation(&self) -> Observation {
        Observation {
            state: self.state.clone(),
            per_agent: self.spec.split_state(&self.state),
        }
    }
}

impl MultiAgentEnv for LinearTeam {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Observation {
        self.state = self.initial.clone();
        self.t = 0;
        self.observation()
    }

    fn step(&mut self, joint_action: &[Vec<f64>]) -> Result<StepResult> {
        if self.t >= self.spec.max_episode_steps {
            return Err(finished_episode());
        }
        let a = self.spec.clamp_action(joint_action)?;
        let flat: Vec<f64> = a.iter().map(|x| x[0]).collect();
        let reward = Self::reward_of(&self.state, &flat);
        self.state = self.transition(&self.state, &flat);
        self.t += 1;
        let done = self.t >= self.spec.max_episode_steps;
        let obs = self.observation();
        Ok(StepResult {
            next_state: obs.state,
            per_agent_obs: obs.per_agent,
            reward,
            done,
            terminal: false,
            info: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_fixed_and_dynamics_are_linear() {
        let mut env = LinearTeam::default_team();
        let s0 = env.reset(1);
        assert_eq!(env.reset(99), s0);
        assert_eq!(s0.state, vec![1.0, -0.5, 0.5, 1.0]);
        let r = env.step(&[vec![0.5], vec![-1.0]]).unwrap();
        assert_eq!(r.next_state, env.transition(&s0.state, &[0.5, -1.0]));
        assert_eq!(r.reward, LinearTeam::reward_of(&s0.state, &[0.5, -1.0]));
        assert!(!r.done);
    }

    #[test]
    fn episode_ends_at_horizon() {
        let mut env = LinearTeam::default_team();
        env.reset(0);
        for t in 0..50 {
            let r = env.step(&[vec![0.0], vec![0.0]]).unwrap();
            assert_eq!(r.done, t == 49);
            assert!(!r.terminal);
        }
        assert!(env.step(&[vec![0.0], vec![0.0]]).is_err());
    }
}
