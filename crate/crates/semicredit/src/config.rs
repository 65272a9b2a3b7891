//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored and unknown
//! keys are rejected. [`RunConfig::to_text`] writes every key, so a written
//! file parses back to an identical configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use semicredit_core::envkit::EnvId;
use semicredit_core::trainer::{Method, TrainConfig};
use sha2::{Digest, Sha256};

use crate::HarnessError;

/// Training configuration plus where and how often to write results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub out_dir: PathBuf,
    /// Write a checkpoint every this many iterations (0 = only the final one).
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            out_dir: PathBuf::from("runs"),
            checkpoint_every: 10,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value
        .parse()
        .map_err(|_| HarnessError::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, HarnessError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, HarnessError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(HarnessError::Config(format!("{key} must be true or false, got {value:?}"))),
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let t = &mut self.train;
        match key {
            "env" => t.env = value.parse::<EnvId>()?,
            "method" => t.method = value.parse::<Method>()?,
            "iterations" => t.iterations = parse_value(key, value)?,
            "steps_per_iteration" => t.steps_per_iteration = parse_value(key, value)?,
            "gamma" => t.gamma = parse_value(key, value)?,
            "gae_lambda" => t.gae_lambda = parse_value(key, value)?,
            "clip" => t.ppo.clip = parse_value(key, value)?,
            "ppo_epochs" => t.ppo.epochs = parse_value(key, value)?,
            "ppo_minibatch" => t.ppo.minibatch = parse_value(key, value)?,
            "samples_per_agent" => t.samples_per_agent = parse_value(key, value)?,
            "exact_credit" => t.exact_credit = parse_bool(key, value)?,
            "standardize_advantages" => t.standardize_advantages = parse_bool(key, value)?,
            "seeds" => t.seeds = parse_list(key, value)?,
            "actor_hidden" => t.actor.hidden = parse_list(key, value)?,
            "actor_lr" => t.actor.learning_rate = parse_value(key, value)?,
            "log_std_init" => t.actor.log_std_init = parse_value(key, value)?,
            "max_grad_norm" => {
                t.actor.max_grad_norm = match value {
                    "none" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "critic_hidden" => t.critic.hidden = parse_list(key, value)?,
            "critic_lr" => t.critic.learning_rate = parse_value(key, value)?,
            "critic_epochs" => t.critic_epochs = parse_value(key, value)?,
            "model_state_hidden" => t.model.state_hidden = parse_list(key, value)?,
            "model_reward_hidden" => t.model.reward_hidden = parse_list(key, value)?,
            "model_lr" => t.model.learning_rate = parse_value(key, value)?,
            "model_epochs" => t.model_epochs = parse_value(key, value)?,
            "minibatch" => t.minibatch = parse_value(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "checkpoint_every" => self.checkpoint_every = parse_value(key, value)?,
            _ => return Err(HarnessError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Every key, in a fixed order.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("env", t.env.to_string());
        put("method", t.method.to_string());
        put("iterations", t.iterations.to_string());
        put("steps_per_iteration", t.steps_per_iteration.to_string());
        put("gamma", t.gamma.to_string());
        put("gae_lambda", t.gae_lambda.to_string());
        put("clip", t.ppo.clip.to_string());
        put("ppo_epochs", t.ppo.epochs.to_string());
        put("ppo_minibatch", t.ppo.minibatch.to_string());
        put("samples_per_agent", t.samples_per_agent.to_string());
        put("exact_credit", t.exact_credit.to_string());
        put("standardize_advantages", t.standardize_advantages.to_string());
        put("seeds", join(&t.seeds));
        put("actor_hidden", join(&t.actor.hidden));
        put("actor_lr", t.actor.learning_rate.to_string());
        put("log_std_init", t.actor.log_std_init.to_string());
        put(
            "max_grad_norm",
            t.actor.max_grad_norm.map_or_else(|| "none".to_string(), |v| v.to_string()),
        );
        put("critic_hidden", join(&t.critic.hidden));
        put("critic_lr", t.critic.learning_rate.to_string());
        put("critic_epochs", t.critic_epochs.to_string());
        put("model_state_hidden", join(&t.model.state_hidden));
        put("model_reward_hidden", join(&t.model.reward_hidden));
        put("model_lr", t.model.learning_rate.to_string());
        put("model_epochs", t.model_epochs.to_string());
        put("minibatch", t.minibatch.to_string());
        put("out_dir", self.out_dir.display().to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        s
    }

    /// SHA-256 of the canonical text form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    /// Directory name for one method/sample-count combination.
    pub fn group_name(&self) -> String {
        let t = &self.train;
        format!("{}_{}_s{}", t.env, t.method.to_string().replace(':', "-"), t.samples_per_agent)
    }
}
