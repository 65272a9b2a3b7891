//! Checkpoint directories: `params.bin` (numcore parameter file),
//! `config.txt` (the run configuration) and `manifest.txt` (versions, config
//! hash and run position).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use semicredit_core::envkit::EnvSpec;
use semicredit_core::numcore::{Activation, ParamFile, Tensor, PARAMS_VERSION};
use semicredit_core::policy::{Critic, GaussianActor, PolicySet, QCritic};
use semicredit_core::worldmodel::{RunningStats, WorldModel};

use crate::config::RunConfig;
use crate::{HarnessError, Result};

pub const CHECKPOINT_FORMAT: &str = "semicredit-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
const MODULES: [&str; 6] = ["numcore", "coopgame", "envkit", "worldmodel", "policy", "credit"];

/// Everything needed to evaluate, report on, or inspect a trained run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub seed: u64,
    /// Number of completed training iterations.
    pub iteration: usize,
    /// `false` for the state dumped when a run aborts.
    pub complete: bool,
    pub policy: PolicySet,
    pub model: Option<WorldModel>,
}

fn insert_stats(file: &mut ParamFile, prefix: &str, stats: &RunningStats) -> Result<()> {
    file.insert(format!("{prefix}.count"), Tensor::scalar(stats.count()))?;
    file.insert(format!("{prefix}.mean"), Tensor::row_vector(stats.mean()))?;
    file.insert(format!("{prefix}.m2"), Tensor::row_vector(stats.m2()))?;
    Ok(())
}

fn read_stats(file: &ParamFile, prefix: &str) -> Result<RunningStats> {
    let count = file.require(&format!("{prefix}.count"))?.item();
    let mean = file.require(&format!("{prefix}.mean"))?.data().to_vec();
    let m2 = file.require(&format!("{prefix}.m2"))?.data().to_vec();
    Ok(RunningStats::from_parts(count, mean, m2)?)
}

fn parse_manifest(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| HarnessError::format(path, format!("bad manifest line {line:?}")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

impl Checkpoint {
    pub fn to_params(&self) -> Result<ParamFile> {
        let mut f = ParamFile::new();
        f.insert_mlp("critic", self.policy.critic.net())?;
        for (i, actor) in self.policy.actors.iter().enumerate() {
            f.insert_mlp(&format!("actor.{i}.mean"), &actor.mean_net)?;
            f.insert(format!("actor.{i}.log_std"), actor.log_std.clone())?;
        }
        if let Some(q) = &self.policy.q_critic {
            f.insert_mlp("q", q.net())?;
        }
        if let Some(m) = &self.model {
            f.insert_mlp("model.fs", &m.f_s)?;
            f.insert_mlp("model.fr", &m.f_r)?;
            insert_stats(&mut f, "model.input", &m.input_stats)?;
            insert_stats(&mut f, "model.delta", &m.delta_stats)?;
            insert_stats(&mut f, "model.reward", &m.reward_stats)?;
        }
        Ok(f)
    }

    /// Rebuilds networks from a parameter file; learning rates come from `config`.
    pub fn from_params(file: &ParamFile, config: RunConfig, seed: u64, iteration: usize, complete: bool) -> Result<Self> {
        let t = &config.train;
        let critic = Critic::from_net(
            file.mlp("critic", Activation::Tanh, Activation::Identity)?,
            t.critic.learning_rate,
        );
        let mut actors = Vec::new();
        while file.get(&format!("actor.{}.log_std", actors.len())).is_some() {
            let i = actors.len();
            let mean = file.mlp(&format!("actor.{i}.mean"), Activation::Tanh, Activation::Tanh)?;
            let log_std = file.require(&format!("actor.{i}.log_std"))?.clone();
            if log_std.shape() != [1, mean.output_dim()] {
                return Err(HarnessError::Incompatible(format!("actor {i} log_std shape {:?}", log_std.shape())));
            }
            actors.push(GaussianActor::from_parts(mean, log_std, &t.actor));
        }
        let q_critic = match file.get("q.0.weight") {
            Some(_) => Some(QCritic::from_net(
                file.mlp("q", Activation::Tanh, Activation::Identity)?,
                t.critic.learning_rate,
            )),
            None => None,
        };
        let model = match file.get("model.fs.0.weight") {
            Some(_) => Some(WorldModel::from_parts(
                file.mlp("model.fs", Activation::Relu, Activation::Identity)?,
                file.mlp("model.fr", Activation::Relu, Activation::Identity)?,
                read_stats(file, "model.input")?,
                read_stats(file, "model.delta")?,
                read_stats(file, "model.reward")?,
                t.model.learning_rate,
            )?),
            None => None,
        };
        Ok(Self {
            config,
            seed,
            iteration,
            complete,
            policy: PolicySet {
                critic,
                actors,
                q_critic,
            },
            model,
        })
    }

    pub fn manifest(&self) -> String {
        let mut lines = vec![
            format!("format = {CHECKPOINT_FORMAT}"),
            format!("format_version = {CHECKPOINT_VERSION}"),
            format!("params_version = {PARAMS_VERSION}"),
            format!("harness_version = {}", env!("CARGO_PKG_VERSION")),
        ];
        lines.extend(MODULES.iter().map(|m| format!("module.{m} = {}", semicredit_core::VERSION)));
        lines.extend([
            format!("config_hash = {}", self.config.hash()),
            format!("env = {}", self.config.train.env),
            format!("method = {}", self.config.train.method),
            format!("seed = {}", self.seed),
            format!("iteration = {}", self.iteration),
            format!("status = {}", if self.complete { "ok" } else { "aborted" }),
        ]);
        lines.join("\n") + "\n"
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            fs::write(&p, bytes).map_err(|e| HarnessError::io(&p, e))
        };
        write("params.bin", &self.to_params()?.to_bytes())?;
        write("config.txt", self.config.to_text().as_bytes())?;
        write("manifest.txt", self.manifest().as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read(&p).map_err(|e| HarnessError::io(&p, e))
        };
        let manifest_path = dir.join("manifest.txt");
        let manifest = parse_manifest(&String::from_utf8_lossy(&read("manifest.txt")?), &manifest_path)?;
        let field = |k: &str| {
            manifest
                .get(k)
                .ok_or_else(|| HarnessError::format(&manifest_path, format!("missing {k}")))
        };
        if field("format")? != CHECKPOINT_FORMAT {
            return Err(HarnessError::format(&manifest_path, "not a checkpoint manifest"));
        }
        if field("format_version")? != &CHECKPOINT_VERSION.to_string() {
            return Err(HarnessError::format(&manifest_path, "unsupported checkpoint version"));
        }
        let config = RunConfig::parse(&String::from_utf8_lossy(&read("config.txt")?))?;
        if field("config_hash")? != &config.hash() {
            return Err(HarnessError::format(&manifest_path, "config hash does not match config.txt"));
        }
        let number = |k: &str| -> Result<u64> {
            field(k)?
                .parse()
                .map_err(|_| HarnessError::format(&manifest_path, format!("bad {k}")))
        };
        let seed = number("seed")?;
        let iteration = number("iteration")? as usize;
        let complete = field("status")? == "ok";
        let params_path = dir.join("params.bin");
        let params = ParamFile::from_bytes(&read("params.bin")?)
            .map_err(|e| HarnessError::format(&params_path, e.to_string()))?;
        Self::from_params(&params, config, seed, iteration, complete)
    }

    /// Checks that the stored networks fit `spec`.
    pub fn check_env(&self, spec: &EnvSpec) -> Result<()> {
        let p = &self.policy;
        if p.actors.len() != spec.n_agents {
            return Err(HarnessError::Incompatible(format!(
                "{} actors for {} agents",
                p.actors.len(),
                spec.n_agents
            )));
        }
        for (i, a) in p.actors.iter().enumerate() {
            if a.obs_dim() != spec.obs_dims[i] || a.action_dim() != spec.action_dims[i] {
                return Err(HarnessError::Incompatible(format!(
                    "actor {i} is {}->{}, env agent is {}->{}",
                    a.obs_dim(),
                    a.action_dim(),
                    spec.obs_dims[i],
                    spec.action_dims[i]
                )));
            }
        }
        let s = spec.global_state_dim();
        if p.critic.state_dim() != s {
            return Err(HarnessError::Incompatible(format!("critic input {} vs state {s}", p.critic.state_dim())));
        }
        let sa = s + spec.joint_action_dim();
        if let Some(q) = &p.q_critic {
            if q.input_dim() != sa {
                return Err(HarnessError::Incompatible(format!("Q-critic input {} vs {sa}", q.input_dim())));
            }
        }
        if let Some(m) = &self.model {
            if m.state_dim() != s || m.action_dim() != spec.joint_action_dim() {
                return Err(HarnessError::Incompatible("world model dimensions".into()));
            }
        }
        Ok(())
    }
}
