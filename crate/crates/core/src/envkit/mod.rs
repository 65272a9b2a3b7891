//! Deterministic multiagent continuous-control environments.
//!
//! Every agent owns a slice of the global state as its local observation, and
//! the concatenation of all local observations is the global state. Actions are
//! clamped to `[-1, 1]` per coordinate. All agents share one scalar reward.

mod additive;
mod chain;
mod linear;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

pub use additive::AdditiveTeam;
pub use chain::{ChainParams, ChainWorld};
pub use linear::LinearTeam;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvSpec {
    pub n_agents: usize,
    pub obs_dims: Vec<usize>,
    pub action_dims: Vec<usize>,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    pub fn global_state_dim(&self) -> usize {
        self.obs_dims.iter().sum()
    }

    pub fn joint_action_dim(&self) -> usize {
        self.action_dims.iter().sum()
    }

    /// Splits a global state into per-agent observations.
    pub fn split_state(&self, state: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_agents);
        let mut offset = 0;
        for &d in &self.obs_dims {
            out.push(state[offset..offset + d].to_vec());
            offset += d;
        }
        out
    }

    /// Zero action for every agent.
    pub fn zero_actions(&self) -> Vec<Vec<f64>> {
        self.action_dims.iter().map(|&d| vec![0.0; d]).collect()
    }

    /// Checks shape and finiteness, returning the clamped joint action.
    pub fn clamp_action(&self, joint_action: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if joint_action.len() != self.n_agents {
            return Err(Error::dim("joint action agents", self.n_agents, joint_action.len()));
        }
        joint_action
            .iter()
            .zip(&self.action_dims)
            .enumerate()
            .map(|(i, (a, &d))| {
                if a.len() != d {
                    return Err(Error::dim("agent action width", d, a.len()));
                }
                if a.iter().any(|x| x.is_nan()) {
                    return Err(Error::NonFinite(format!("action of agent {i} is NaN")));
                }
                Ok(a.iter().map(|x| x.clamp(-1.0, 1.0)).collect())
            })
            .collect()
    }
}

/// Global state plus its per-agent split.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub state: Vec<f64>,
    pub per_agent: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub per_agent_obs: Vec<Vec<f64>>,
    /// Shared by all agents.
    pub reward: f64,
    /// The episode is over (terminated or hit the step limit).
    pub done: bool,
    /// The episode ended in a true terminal state; no bootstrapping past it.
    pub terminal: bool,
    pub info: Vec<(&'static str, f64)>,
}

pub trait MultiAgentEnv {
    fn spec(&self) -> &EnvSpec;

    fn reset(&mut self, seed: u64) -> Observation;

    fn step(&mut self, joint_action: &[Vec<f64>]) -> Result<StepResult>;

    /// Action substituted for agents outside a coalition.
    fn default_actions(&self) -> Vec<Vec<f64>> {
        self.spec().zero_actions()
    }
}

/// Environment identifiers accepted by configs and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvId {
    Chain4,
    Chain6,
    Additive,
    Linear,
}

impl EnvId {
    pub const ALL: [EnvId; 4] = [EnvId::Chain4, EnvId::Chain6, EnvId::Additive, EnvId::Linear];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::Chain4 => "chain4",
            EnvId::Chain6 => "chain6",
            EnvId::Additive => "additive",
            EnvId::Linear => "linear",
        }
    }

    pub fn make(self) -> Box<dyn MultiAgentEnv> {
        match self {
            EnvId::Chain4 => Box::new(ChainWorld::new(ChainParams::with_joints(4))),
            EnvId::Chain6 => Box::new(ChainWorld::new(ChainParams::with_joints(6))),
            EnvId::Additive => Box::new(AdditiveTeam::default_team()),
            EnvId::Linear => Box::new(LinearTeam::default_team()),
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown environment {s:?} (expected one of chain4, chain6, additive, linear)"
                ))
            })
    }
}

/// Builds an environment from its string id.
pub fn make_env(id: &str) -> Result<Box<dyn MultiAgentEnv>> {
    Ok(id.parse::<EnvId>()?.make())
}

pub(crate) fn finished_episode() -> Error {
    Error::contract(String::from("step called on a finished episode; call reset first"))
}
