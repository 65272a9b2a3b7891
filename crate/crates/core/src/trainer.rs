//! The training loop: rollout, model (or Q-critic) fit, credit assignment,
//! per-agent PPO updates and critic regression, in that order every iteration.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::credit::{
    per_agent_advantages, AgentCredit, CreditConfig, EvaluatorKind, ModelBasedEvaluator, QValueEvaluator, SpecId,
};
use crate::envkit::{EnvId, MultiAgentEnv, Observation};
use crate::policy::{
    batch_gae, critic_update, ppo_actor_update, q_critic_update, standardize, ActorConfig, CriticConfig, PolicySet,
    PpoConfig, RolloutBatch, Transition,
};
use crate::rng::{derive_seed, rng_for, tag, Rng};
use crate::worldmodel::{WorldModel, WorldModelConfig};
use crate::{Error, Result};

/// Credit-assignment method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Semivalue credit with model-based coalition values.
    ModelBased(SpecId),
    /// Shapley credit with coalition values from a Q-critic.
    QShapley,
    /// One shared GAE advantage for every agent.
    Mappo,
}

impl Method {
    pub const MB_SHAPLEY: Method = Method::ModelBased(SpecId::Shapley);
    pub const MB_BANZHAF: Method = Method::ModelBased(SpecId::Banzhaf);
    pub const MB_LOO: Method = Method::ModelBased(SpecId::Loo);

    /// Evaluator and semivalue, or `None` for the shared-advantage path.
    pub fn credit(self) -> Option<(EvaluatorKind, SpecId)> {
        match self {
            Method::ModelBased(spec) => Some((EvaluatorKind::ModelBased, spec)),
            Method::QShapley => Some((EvaluatorKind::QCritic, SpecId::Shapley)),
            Method::Mappo => None,
        }
    }

    pub fn uses_world_model(self) -> bool {
        matches!(self, Method::ModelBased(_))
    }

    pub fn uses_q_critic(self) -> bool {
        matches!(self, Method::QShapley)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::ModelBased(spec) => write!(f, "mb-{spec}"),
            Method::QShapley => f.write_str("q-shapley"),
            Method::Mappo => f.write_str("mappo"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q-shapley" => Ok(Method::QShapley),
            "mappo" => Ok(Method::Mappo),
            _ => s
                .strip_prefix("mb-")
                .and_then(|spec| spec.parse::<SpecId>().ok())
                .map(Method::ModelBased)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "unknown method {s:?} (expected mb-shapley, mb-banzhaf, mb-loo, mb-fixed:c, q-shapley or mappo)"
                    ))
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvId,
    pub method: Method,
    pub iterations: usize,
    pub steps_per_iteration: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub samples_per_agent: usize,
    pub exact_credit: bool,
    pub standardize_advantages: bool,
    pub seeds: Vec<u64>,
    pub ppo: PpoConfig,
    pub actor: ActorConfig,
    pub critic: CriticConfig,
    pub critic_epochs: usize,
    pub model: WorldModelConfig,
    pub model_epochs: usize,
    /// Minibatch size for model, critic and Q-critic regression.
    pub minibatch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: EnvId::Chain4,
            method: Method::MB_SHAPLEY,
            iterations: 60,
            steps_per_iteration: 2048,
            gamma: 0.99,
            gae_lambda: 0.95,
            samples_per_agent: 1,
            exact_credit: false,
            standardize_advantages: true,
            seeds: (0..5).collect(),
            ppo: PpoConfig::default(),
            actor: ActorConfig::default(),
            critic: CriticConfig::default(),
            critic_epochs: 10,
            model: WorldModelConfig::default(),
            model_epochs: 10,
            minibatch: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.steps_per_iteration == 0 {
            return bad(String::from("steps_per_iteration must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gamma {} and lambda {} must lie in [0, 1]", self.gamma, self.gae_lambda));
        }
        if self.samples_per_agent == 0 {
            return bad(String::from("samples_per_agent must be at least 1"));
        }
        if self.minibatch == 0 || self.ppo.minibatch == 0 {
            return bad(String::from("minibatch sizes must be positive"));
        }
        if !(self.ppo.clip > 0.0 && self.ppo.clip < 1.0) {
            return bad(format!("clip {} outside (0, 1)", self.ppo.clip));
        }
        if self.seeds.is_empty() {
            return bad(String::from("at least one seed is required"));
        }
        let n = self.env.make().spec().n_agents;
        if let Some((_, spec)) = self.method.credit() {
            spec.spec(n)?;
        }
        Ok(())
    }

    pub fn credit_config(&self) -> Option<CreditConfig> {
        self.method.credit().map(|(evaluator, spec)| CreditConfig {
            spec,
            samples_per_agent: self.samples_per_agent,
            evaluator,
            gamma: self.gamma,
            exact: self.exact_credit,
        })
    }
}

/// Completed-episode statistics of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    /// Total reward of each episode that finished inside the rollout. When
    /// none finished, the single partial episode is reported instead.
    pub returns: Vec<f64>,
    /// Mean `|a|` per agent over all steps and action coordinates.
    pub mean_abs_action: Vec<f64>,
}

impl EpisodeStats {
    pub fn mean(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len().max(1) as f64
    }

    /// Population standard deviation of the episode rewards.
    pub fn std(&self) -> f64 {
        let m = self.mean();
        let n = self.returns.len().max(1) as f64;
        libm::sqrt(self.returns.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / n)
    }
}

/// Controls how a rollout picks actions.
#[derive(Debug, Clone, Default)]
pub struct RolloutOptions {
    pub deterministic: bool,
    /// Agents whose executed action is replaced by their default action.
    pub force_default: Vec<usize>,
}

/// Runs `policy` for `steps` environment steps, resetting episodes from
/// `reset_seed(k)` for the `k`-th episode. Agent `i` samples from `agent_rngs[i]`.
pub fn collect_rollout(
    env: &mut dyn MultiAgentEnv,
    policy: &PolicySet,
    steps: usize,
    agent_rngs: &mut [Rng],
    reset_seed: &mut dyn FnMut() -> u64,
    options: &RolloutOptions,
) -> Result<(RolloutBatch, EpisodeStats)> {
    let n = env.spec().n_agents;
    if policy.n_agents() != n {
        return Err(Error::dim("policy agents", n, policy.n_agents()));
    }
    for (i, a) in policy.actors.iter().enumerate() {
        if a.obs_dim() != env.spec().obs_dims[i] || a.action_dim() != env.spec().action_dims[i] {
            return Err(Error::Contract(format!("actor {i} does not fit the environment")));
        }
    }
    let defaults = env.default_actions();
    let mut batch = RolloutBatch::new(n);
    let mut returns = Vec::new();
    let mut abs_sum = vec![0.0; n];
    let mut obs: Observation = env.reset(reset_seed());
    let mut episode_return = 0.0;
    for _ in 0..steps {
        let outs = policy.act(&obs.per_agent, agent_rngs, options.deterministic)?;
        let mut actions: Vec<Vec<f64>> = outs.iter().map(|o| o.action.clone()).collect();
        for &i in &options.force_default {
            actions[i] = defaults[i].clone();
        }
        for (i, a) in actions.iter().enumerate() {
            abs_sum[i] += a.iter().map(|x| x.abs()).sum::<f64>() / a.len().max(1) as f64;
        }
        let r = env.step(&actions)?;
        if !r.reward.is_finite() {
            return Err(Error::NonFinite(format!("environment reward {}", r.reward)));
        }
        episode_return += r.reward;
        batch.push(Transition {
            state: obs.state,
            next_state: r.next_state.clone(),
            obs: obs.per_agent,
            actions,
            raw_actions: outs.iter().map(|o| o.raw.clone()).collect(),
            log_probs: outs.iter().map(|o| o.log_prob).collect(),
            reward: r.reward,
            done: r.done,
            terminal: r.terminal,
        })?;
        obs = if r.done {
            returns.push(episode_return);
            episode_return = 0.0;
            env.reset(reset_seed())
        } else {
            Observation {
                state: r.next_state,
                per_agent: r.per_agent_obs,
            }
        };
    }
    batch.close_segment();
    if returns.is_empty() {
        returns.push(episode_return);
    }
    let mean_abs_action = abs_sum.iter().map(|s| s / steps.max(1) as f64).collect();
    Ok((
        batch,
        EpisodeStats {
            returns,
            mean_abs_action,
        },
    ))
}

/// Metrics of one training iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    /// Cumulative environment steps including this iteration.
    pub env_steps: usize,
    pub mean_episode_reward: f64,
    pub episode_reward_std: f64,
    pub mean_abs_action: Vec<f64>,
    /// Present for model-based methods.
    pub model_delta_mse: Option<f64>,
    pub model_reward_mse: Option<f64>,
    /// Final-epoch loss of the critic regression.
    pub critic_loss: f64,
    /// Mean raw advantage per agent before standardization.
    pub mean_psi: Vec<f64>,
    /// Actor minibatches dropped for non-finite ratios, summed over agents.
    pub ppo_skipped: usize,
}

/// State of one seeded training run.
pub struct Trainer {
    config: TrainConfig,
    seed: u64,
    env: Box<dyn MultiAgentEnv>,
    policy: PolicySet,
    model: Option<WorldModel>,
    iteration: usize,
    env_steps: usize,
    episodes: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let env = config.env.make();
        let spec = env.spec().clone();
        let policy = PolicySet::new(
            &spec,
            &config.actor,
            &config.critic,
            config.method.uses_q_critic(),
            derive_seed(seed, &[tag::INIT]),
        );
        let model = config.method.uses_world_model().then(|| {
            WorldModel::new(
                spec.global_state_dim(),
                spec.joint_action_dim(),
                &config.model,
                &mut rng_for(seed, &[tag::INIT, 3]),
            )
        });
        Ok(Self {
            config,
            seed,
            env,
            policy,
            model,
            iteration: 0,
            env_steps: 0,
            episodes: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn policy(&self) -> &PolicySet {
        &self.policy
    }

    pub fn model(&self) -> Option<&WorldModel> {
        self.model.as_ref()
    }

    pub fn env(&self) -> &dyn MultiAgentEnv {
        self.env.as_ref()
    }

    /// One pass of the training loop.
    pub fn iterate(&mut self) -> Result<IterationStats> {
        let k = self.iteration as u64;
        let cfg = &self.config;
        let n = self.env.spec().n_agents;

        // 1. rollout with the current policy
        let mut agent_rngs: Vec<Rng> = (0..n).map(|i| rng_for(self.seed, &[tag::ROLLOUT, k, i as u64])).collect();
        let seed = self.seed;
        let episodes = &mut self.episodes;
        let mut reset_seed = || {
            *episodes += 1;
            derive_seed(seed, &[tag::RESET, *episodes - 1])
        };
        let (mut batch, episode_stats) = collect_rollout(
            self.env.as_mut(),
            &self.policy,
            cfg.steps_per_iteration,
            &mut agent_rngs,
            &mut reset_seed,
            &RolloutOptions::default(),
        )?;
        self.env_steps += batch.len();
        let critic = &self.policy.critic;
        batch.values = critic.values(&batch.state_matrix()?)?;
        let next = critic.values(&batch.next_state_matrix()?)?;
        batch.next_values = next
            .iter()
            .zip(&batch.terminals)
            .map(|(&v, &t)| if t { 0.0 } else { v })
            .collect();
        batch.compute_returns(cfg.gamma)?;

        // 2. fit the world model or the Q-critic
        let mut model_delta_mse = None;
        let mut model_reward_mse = None;
        if let Some(model) = self.model.as_mut() {
            let fit = model.fit(&batch, cfg.model_epochs, cfg.minibatch, &mut rng_for(self.seed, &[tag::MODEL_FIT, k]))?;
            model_delta_mse = Some(fit.delta_mse);
            model_reward_mse = Some(fit.reward_mse);
        }
        if let Some(q) = self.policy.q_critic.as_mut() {
            let x = batch.state_action_matrix()?;
            let trace = q_critic_update(
                q,
                &x,
                &batch.returns,
                cfg.critic_epochs,
                cfg.minibatch,
                &mut rng_for(self.seed, &[tag::Q_CRITIC, k]),
            )?;
            check_finite("Q-critic loss", trace.last().copied().unwrap_or(0.0))?;
        }

        // 3. advantages with the pre-update critic
        let defaults = self.env.default_actions();
        let credit_seed = derive_seed(self.seed, &[tag::CREDIT, k]);
        let advantages: Vec<Vec<f64>> = match cfg.credit_config() {
            Some(cc) => {
                let AgentCredit { psi, .. } = match cc.evaluator {
                    EvaluatorKind::ModelBased => {
                        let model = self.model.as_ref().expect("model-based methods own a world model");
                        let eval = ModelBasedEvaluator::new(model, &self.policy.critic, cfg.gamma, defaults)?;
                        per_agent_advantages(&batch, &cc, &eval, credit_seed)?
                    }
                    EvaluatorKind::QCritic => {
                        let q = self.policy.q_critic.as_ref().expect("q-shapley owns a Q-critic");
                        per_agent_advantages(&batch, &cc, &QValueEvaluator::new(q, defaults), credit_seed)?
                    }
                };
                psi
            }
            None => batch_gae(&batch, cfg.gamma, cfg.gae_lambda)?
                .into_iter()
                .map(|a| vec![a; n])
                .collect(),
        };
        batch.advantages = advantages;

        // 4. per-agent actor updates
        let mut mean_psi = Vec::with_capacity(n);
        let mut ppo_skipped = 0;
        for i in 0..n {
            let raw = batch.agent_advantages(i);
            let m = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
            check_finite("advantage", m)?;
            mean_psi.push(m);
            let adv = if cfg.standardize_advantages { standardize(&raw) } else { raw };
            let lp: Vec<f64> = batch.log_probs.iter().map(|row| row[i]).collect();
            let stats = ppo_actor_update(
                &mut self.policy.actors[i],
                &batch.agent_obs_matrix(i)?,
                &batch.agent_raw_action_matrix(i)?,
                &lp,
                &adv,
                &cfg.ppo,
                &mut rng_for(self.seed, &[tag::ACTOR, k, i as u64]),
            )?;
            ppo_skipped += stats.skipped;
        }

        // 5. critic regression on the empirical returns
        let trace = critic_update(
            &mut self.policy.critic,
            &batch.state_matrix()?,
            &batch.returns,
            cfg.critic_epochs,
            cfg.minibatch,
            &mut rng_for(self.seed, &[tag::CRITIC, k]),
        )?;
        let critic_loss = trace.last().copied().unwrap_or(f64::NAN);
        if cfg.critic_epochs > 0 {
            check_finite("critic loss", critic_loss)?;
        }

        let stats = IterationStats {
            iteration: self.iteration,
            env_steps: self.env_steps,
            mean_episode_reward: episode_stats.mean(),
            episode_reward_std: episode_stats.std(),
            mean_abs_action: episode_stats.mean_abs_action,
            model_delta_mse,
            model_reward_mse,
            critic_loss,
            mean_psi,
            ppo_skipped,
        };
        self.iteration += 1;
        Ok(stats)
    }
}

fn check_finite(what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} is {v}")))
    }
}

/// Summary of deterministic evaluation episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_abs_action: Vec<f64>,
}

/// Plays `episodes` full episodes with every actor's mean action.
pub fn evaluate_policy(policy: &PolicySet, env: &mut dyn MultiAgentEnv, episodes: usize, seed: u64) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::contract("evaluation needs at least one episode"));
    }
    let n = env.spec().n_agents;
    let horizon = env.spec().max_episode_steps;
    let mut rngs: Vec<Rng> = (0..n).map(|i| rng_for(seed, &[tag::EVAL, i as u64])).collect();
    let mut returns = Vec::with_capacity(episodes);
    let mut abs = vec![0.0; n];
    for e in 0..episodes as u64 {
        let mut once = Some(derive_seed(seed, &[tag::RESET, e]));
        let mut reset = || once.take().unwrap_or(0);
        let options = RolloutOptions {
            deterministic: true,
            force_default: Vec::new(),
        };
        let (batch, stats) = collect_rollout(env, policy, horizon, &mut rngs, &mut reset, &options)?;
        returns.push(batch.rewards.iter().sum::<f64>());
        for (a, m) in abs.iter_mut().zip(&stats.mean_abs_action) {
            *a += m;
        }
    }
    let stats = EpisodeStats {
        returns,
        mean_abs_action: abs.iter().map(|a| a / episodes as f64).collect(),
    };
    Ok(EvalSummary {
        episodes,
        mean_reward: stats.mean(),
        std_reward: stats.std(),
        mean_abs_action: stats.mean_abs_action,
    })
}

/// Frozen-policy rollout together with its per-step, per-agent credit.
pub fn credit_rollout(
    policy: &PolicySet,
    model: Option<&WorldModel>,
    env: &mut dyn MultiAgentEnv,
    steps: usize,
    seed: u64,
    credit: &CreditConfig,
    force_default: &[usize],
) -> Result<(RolloutBatch, AgentCredit)> {
    let n = env.spec().n_agents;
    if let Some(&bad) = force_default.iter().find(|&&i| i >= n) {
        return Err(Error::contract(format!("agent {bad} outside 0..{n}")));
    }
    let mut rngs: Vec<Rng> = (0..n).map(|i| rng_for(seed, &[tag::ROLLOUT, i as u64])).collect();
    let mut episode = 0u64;
    let mut reset = || {
        episode += 1;
        derive_seed(seed, &[tag::RESET, episode - 1])
    };
    let options = RolloutOptions {
        deterministic: false,
        force_default: force_default.to_vec(),
    };
    let (batch, _) = collect_rollout(env, policy, steps, &mut rngs, &mut reset, &options)?;
    let defaults = env.default_actions();
    let credit_seed = derive_seed(seed, &[tag::CREDIT]);
    let result = match credit.evaluator {
        EvaluatorKind::ModelBased => {
            let model = model.ok_or_else(|| Error::contract("model-based credit needs a world model"))?;
            let eval = ModelBasedEvaluator::new(model, &policy.critic, credit.gamma, defaults)?;
            per_agent_advantages(&batch, credit, &eval, credit_seed)?
        }
        EvaluatorKind::QCritic => {
            let q = policy
                .q_critic
                .as_ref()
                .ok_or_else(|| Error::contract("Q-value credit needs a Q-critic"))?;
            per_agent_advantages(&batch, credit, &QValueEvaluator::new(q, defaults), credit_seed)?
        }
    };
    Ok((batch, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envkit::AdditiveTeam;

    fn quick(method: Method, env: EnvId) -> TrainConfig {
        TrainConfig {
            env,
            method,
            iterations: 2,
            steps_per_iteration: 256,
            model: WorldModelConfig {
                state_hidden: vec![32, 32],
                reward_hidden: vec![32, 32],
                learning_rate: 1e-3,
            },
            model_epochs: 2,
            critic_epochs: 2,
            ppo: PpoConfig {
                epochs: 2,
                ..PpoConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn method_strings_round_trip() {
        for s in ["mb-shapley", "mb-banzhaf", "mb-loo", "mb-fixed:2", "q-shapley", "mappo"] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        for s in ["shapley", "mb-owen", "q-banzhaf", "mb-fixed:"] {
            assert!(matches!(s.parse::<Method>(), Err(Error::Config(_))), "{s}");
        }
    }

    #[test]
    fn every_method_runs_and_is_deterministic() {
        for m in ["mb-shapley", "mb-banzhaf", "mb-loo", "mb-fixed:1", "q-shapley", "mappo"] {
            let cfg = quick(m.parse().unwrap(), EnvId::Chain4);
            let run = || {
                let mut t = Trainer::new(cfg.clone(), 7).unwrap();
                (0..2).map(|_| t.iterate().unwrap()).collect::<Vec<_>>()
            };
            let a = run();
            assert_eq!(a, run(), "{m}");
            assert_eq!(a.len(), 2);
            assert_eq!(a[1].env_steps, 512);
            assert_eq!(a[0].model_delta_mse.is_some(), m.starts_with("mb-"));
        }
    }

    #[test]
    fn seeds_are_isolated() {
        let cfg = quick(Method::Mappo, EnvId::Chain4);
        let a = Trainer::new(cfg.clone(), 1).unwrap().iterate().unwrap();
        let b = Trainer::new(cfg, 2).unwrap().iterate().unwrap();
        assert_ne!(a.mean_episode_reward, b.mean_episode_reward);
    }

    #[test]
    fn fixed_size_out_of_range_is_a_config_error() {
        let cfg = quick("mb-fixed:4".parse().unwrap(), EnvId::Chain4);
        assert!(Trainer::new(cfg, 0).is_err());
    }

    #[test]
    fn untrained_policy_is_optimal_for_zero_targets() {
        let team = AdditiveTeam::new(vec![1.0, 2.0, 3.0], vec![0.0; 3]).unwrap();
        let mut env: Box<dyn MultiAgentEnv> = Box::new(team);
        let policy = PolicySet::new(env.spec(), &ActorConfig::default(), &CriticConfig::default(), false, 0);
        let s = evaluate_policy(&policy, env.as_mut(), 3, 0).unwrap();
        assert_eq!(s.mean_reward, 6.0);
        assert_eq!(s.std_reward, 0.0);
        assert_eq!(s.mean_abs_action, vec![0.0; 3]);
        assert!(evaluate_policy(&policy, env.as_mut(), 0, 0).is_err());
    }

    #[test]
    fn credit_rollout_has_one_row_per_step() {
        let mut env = EnvId::Chain4.make();
        let policy = PolicySet::new(env.spec(), &ActorConfig::default(), &CriticConfig::default(), true, 0);
        let cc = CreditConfig {
            spec: SpecId::Shapley,
            samples_per_agent: 2,
            evaluator: EvaluatorKind::QCritic,
            gamma: 0.99,
            exact: false,
        };
        let (batch, credit) = credit_rollout(&policy, None, env.as_mut(), 37, 0, &cc, &[1]).unwrap();
        assert_eq!(batch.len(), 37);
        assert_eq!(credit.psi.len(), 37);
        assert!(credit.psi.iter().all(|row| row[1] == 0.0));
    }
}
