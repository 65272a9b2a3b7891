//! Coalition values from learned models, and per-agent semivalue advantages.
//!
//! A coalition's value is the estimated return of the joint action in which
//! every non-member plays its default action. The model-based evaluator
//! imagines one step with the world model and bootstraps with the critic; the
//! Q-value evaluator reads a centralized action-value critic.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::coopgame::{mask_action, semivalues_exact, Coalition, CoalitionSampler, Game, SemivalueSpec, TableGame};
use crate::numcore::Tensor;
use crate::policy::{flatten, gae_with_next_values, Critic, QCritic, RolloutBatch};
use crate::rng::stream_rng;
use crate::worldmodel::WorldModel;
use crate::{Error, Result};

/// Largest agent count for which exact mode may be requested.
pub const EXACT_MODE_LIMIT: usize = 10;

/// Upper bound on rows sent through a network at once.
const CHUNK_ROWS: usize = 1 << 15;

/// Which semivalue to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecId {
    Shapley,
    Banzhaf,
    Loo,
    /// All weight on coalitions of exactly this size.
    Fixed(usize),
}

impl SpecId {
    pub fn spec(self, n: usize) -> Result<SemivalueSpec> {
        match self {
            SpecId::Shapley => SemivalueSpec::shapley(n),
            SpecId::Banzhaf => SemivalueSpec::banzhaf(n),
            SpecId::Loo => SemivalueSpec::leave_one_out(n),
            SpecId::Fixed(c) => SemivalueSpec::fixed_size(n, c),
        }
    }
}

impl fmt::Display for SpecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecId::Shapley => f.write_str("shapley"),
            SpecId::Banzhaf => f.write_str("banzhaf"),
            SpecId::Loo => f.write_str("loo"),
            SpecId::Fixed(c) => write!(f, "fixed:{c}"),
        }
    }
}

impl FromStr for SpecId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shapley" => Ok(SpecId::Shapley),
            "banzhaf" => Ok(SpecId::Banzhaf),
            "loo" => Ok(SpecId::Loo),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|c| c.parse().ok())
                .map(SpecId::Fixed)
                .ok_or_else(|| Error::Config(format!("unknown semivalue {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaluatorKind {
    ModelBased,
    QCritic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreditConfig {
    pub spec: SpecId,
    pub samples_per_agent: usize,
    pub evaluator: EvaluatorKind,
    pub gamma: f64,
    /// Enumerate coalitions instead of sampling (only for small teams).
    pub exact: bool,
}

impl CreditConfig {
    pub fn validate(&self, n: usize) -> Result<SemivalueSpec> {
        if self.samples_per_agent == 0 {
            return Err(Error::Config(String::from("samples per agent must be at least 1")));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        self.spec.spec(n)
    }

    pub fn uses_exact_mode(&self, n: usize) -> bool {
        self.exact && n <= EXACT_MODE_LIMIT
    }
}

/// One characteristic-function query.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub state: &'a [f64],
    pub actions: &'a [Vec<f64>],
    pub coalition: Coalition,
    /// The real transition ended in a terminal state; nothing to bootstrap.
    pub terminal: bool,
}

/// Maps (state, joint action, coalition) to a value with frozen parameters.
pub trait CoalitionEvaluator {
    fn n_agents(&self) -> usize;

    fn defaults(&self) -> &[Vec<f64>];

    /// Values of many queries, computed in as few network passes as possible.
    fn evaluate(&self, queries: &[Query<'_>]) -> Result<Vec<f64>>;
}

/// Rows of `s ⊕ ã` for a set of queries.
fn masked_inputs(queries: &[Query<'_>], defaults: &[Vec<f64>]) -> Result<Tensor> {
    let mut rows = Vec::with_capacity(queries.len());
    for q in queries {
        let masked = mask_action(q.actions, q.coalition, defaults)?;
        let mut row = q.state.to_vec();
        row.extend(flatten(&masked));
        rows.push(row);
    }
    let width = rows.first().map_or(0, Vec::len);
    Tensor::from_rows(&rows, width)
}

/// `f_r(s, ã) + γ V(s + f_s(s, ã))`.
#[derive(Debug, Clone)]
pub struct ModelBasedEvaluator<'a> {
    pub model: &'a WorldModel,
    pub critic: &'a Critic,
    pub gamma: f64,
    pub defaults: Vec<Vec<f64>>,
}

impl<'a> ModelBasedEvaluator<'a> {
    pub fn new(model: &'a WorldModel, critic: &'a Critic, gamma: f64, defaults: Vec<Vec<f64>>) -> Result<Self> {
        if critic.state_dim() != model.state_dim() {
            return Err(Error::dim("critic vs world model state", model.state_dim(), critic.state_dim()));
        }
        let width: usize = defaults.iter().map(Vec::len).sum();
        if width != model.action_dim() {
            return Err(Error::dim("default joint action", model.action_dim(), width));
        }
        Ok(Self {
            model,
            critic,
            gamma,
            defaults,
        })
    }
}

impl CoalitionEvaluator for ModelBasedEvaluator<'_> {
    fn n_agents(&self) -> usize {
        self.defaults.len()
    }

    fn defaults(&self) -> &[Vec<f64>] {
        &self.defaults
    }

    fn evaluate(&self, queries: &[Query<'_>]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(queries.len());
        for chunk in queries.chunks(CHUNK_ROWS) {
            let x = masked_inputs(chunk, &self.defaults)?;
            let (next, rewards) = self.model.predict_batch(&x)?;
            let v = if self.gamma == 0.0 {
                vec![0.0; chunk.len()]
            } else {
                self.critic.values(&next)?
            };
            for ((q, r), v) in chunk.iter().zip(rewards).zip(v) {
                let boot = if q.terminal { 0.0 } else { self.gamma * v };
                out.push(r + boot);
            }
        }
        Ok(out)
    }
}

/// `Q(s, ã)` from a centralized action-value critic.
#[derive(Debug, Clone)]
pub struct QValueEvaluator<'a> {
    pub q: &'a QCritic,
    pub defaults: Vec<Vec<f64>>,
}

impl<'a> QValueEvaluator<'a> {
    pub fn new(q: &'a QCritic, defaults: Vec<Vec<f64>>) -> Self {
        Self { q, defaults }
    }
}

impl CoalitionEvaluator for QValueEvaluator<'_> {
    fn n_agents(&self) -> usize {
        self.defaults.len()
    }

    fn defaults(&self) -> &[Vec<f64>] {
        &self.defaults
    }

    fn evaluate(&self, queries: &[Query<'_>]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(queries.len());
        for chunk in queries.chunks(CHUNK_ROWS) {
            let x = masked_inputs(chunk, &self.defaults)?;
            if x.cols() != self.q.input_dim() {
                return Err(Error::dim("Q-critic input", self.q.input_dim(), x.cols()));
            }
            out.extend(self.q.values(&x)?);
        }
        Ok(out)
    }
}

/// Value of coalition `c` at `(state, actions)`.
pub fn coalition_value(
    eval: &impl CoalitionEvaluator,
    state: &[f64],
    actions: &[Vec<f64>],
    c: Coalition,
) -> Result<f64> {
    Ok(eval.evaluate(&[Query {
        state,
        actions,
        coalition: c,
        terminal: false,
    }])?[0])
}

/// The characteristic function at one fixed (state, joint action).
pub struct PointGame<'a, E: CoalitionEvaluator> {
    pub eval: &'a E,
    pub state: &'a [f64],
    pub actions: &'a [Vec<f64>],
    pub terminal: bool,
}

impl<E: CoalitionEvaluator> Game for PointGame<'_, E> {
    fn n_agents(&self) -> usize {
        self.eval.n_agents()
    }

    fn value(&self, coalition: Coalition) -> Result<f64> {
        Ok(self.values(&[coalition])?[0])
    }

    fn values(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        let queries: Vec<Query<'_>> = coalitions
            .iter()
            .map(|&coalition| Query {
                state: self.state,
                actions: self.actions,
                coalition,
                terminal: self.terminal,
            })
            .collect();
        self.eval.evaluate(&queries)
    }
}

/// Per-agent semivalue advantages for a whole batch.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentCredit {
    /// `psi[t][i]`.
    pub psi: Vec<Vec<f64>>,
    /// Coalitions averaged per entry: the sample count, or `2^(n-1)` when exact.
    pub coalition_samples: usize,
}

/// RNG stream for agent `i` at timestep `t`.
pub fn credit_stream(t: usize, i: usize, n: usize) -> u64 {
    (t as u64) * (n as u64) + i as u64
}

/// `psi[t][i]` for every timestep and agent. Monte-Carlo mode draws agent
/// `i`'s coalitions at step `t` from its own stream under `seed`, so results do
/// not depend on evaluation order. All coalition values of a timestep are
/// deduplicated and evaluated together.
pub fn per_agent_advantages(
    batch: &RolloutBatch,
    config: &CreditConfig,
    eval: &impl CoalitionEvaluator,
    seed: u64,
) -> Result<AgentCredit> {
    let n = batch.n_agents;
    if eval.n_agents() != n {
        return Err(Error::dim("evaluator agents", n, eval.n_agents()));
    }
    let spec = config.validate(n)?;
    if config.uses_exact_mode(n) {
        return exact_advantages(batch, &spec, eval);
    }
    let sampler = CoalitionSampler::new(&spec)?;
    let k = config.samples_per_agent;

    // Per timestep: the distinct coalitions needed, and for every (agent,
    // sample) the indices of v(C ∪ {i}) and v(C) in that list.
    let mut needed: Vec<Vec<Coalition>> = Vec::with_capacity(batch.len());
    let mut pairs: Vec<Vec<(usize, usize)>> = Vec::with_capacity(batch.len());
    for t in 0..batch.len() {
        let mut index: BTreeMap<Coalition, usize> = BTreeMap::new();
        let mut list = Vec::new();
        let mut slot = |c: Coalition, list: &mut Vec<Coalition>| -> usize {
            *index.entry(c).or_insert_with(|| {
                list.push(c);
                list.len() - 1
            })
        };
        let mut p = Vec::with_capacity(n * k);
        for i in 0..n {
            let mut rng = stream_rng(seed, credit_stream(t, i, n));
            for _ in 0..k {
                let c = sampler.sample(i, &mut rng);
                let with = slot(c.with(i), &mut list);
                let without = slot(c, &mut list);
                p.push((with, without));
            }
        }
        needed.push(list);
        pairs.push(p);
    }

    let values = evaluate_per_step(batch, eval, &needed)?;
    let psi = (0..batch.len())
        .map(|t| {
            (0..n)
                .map(|i| {
                    let s: f64 = pairs[t][i * k..(i + 1) * k]
                        .iter()
                        .map(|&(w, wo)| values[t][w] - values[t][wo])
                        .sum();
                    s / k as f64
                })
                .collect()
        })
        .collect();
    Ok(AgentCredit {
        psi,
        coalition_samples: k,
    })
}

/// Evaluates `needed[t]` at each step's (state, action), batched across steps.
fn evaluate_per_step(
    batch: &RolloutBatch,
    eval: &impl CoalitionEvaluator,
    needed: &[Vec<Coalition>],
) -> Result<Vec<Vec<f64>>> {
    let mut queries = Vec::with_capacity(needed.iter().map(Vec::len).sum());
    for (t, list) in needed.iter().enumerate() {
        for &coalition in list {
            queries.push(Query {
                state: &batch.states[t],
                actions: &batch.actions[t],
                coalition,
                terminal: batch.terminals[t],
            });
        }
    }
    let flat = eval.evaluate(&queries)?;
    if let Some(bad) = flat.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("coalition value {bad} is {}", flat[bad])));
    }
    let mut out = Vec::with_capacity(needed.len());
    let mut offset = 0;
    for list in needed {
        out.push(flat[offset..offset + list.len()].to_vec());
        offset += list.len();
    }
    Ok(out)
}

fn exact_advantages(
    batch: &RolloutBatch,
    spec: &SemivalueSpec,
    eval: &impl CoalitionEvaluator,
) -> Result<AgentCredit> {
    let n = batch.n_agents;
    let all: Vec<Coalition> = (0..1u64 << n)
        .map(|m| Coalition::from_mask(n, m).expect("mask below 2^n"))
        .collect();
    let needed = vec![all; batch.len()];
    let values = evaluate_per_step(batch, eval, &needed)?;
    let psi = values
        .into_iter()
        .map(|table| semivalues_exact(&TableGame::new(n, table)?, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(AgentCredit {
        psi,
        coalition_samples: 1 << (n - 1),
    })
}

/// GAE on the shared reward with the critic's values; every agent gets `A_t`.
pub fn shared_advantages(batch: &RolloutBatch, critic: &Critic, gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    let values = critic.values(&batch.state_matrix()?)?;
    let next = critic.values(&batch.next_state_matrix()?)?;
    let next_values: Vec<f64> = next
        .iter()
        .zip(&batch.terminals)
        .map(|(&v, &term)| if term { 0.0 } else { v })
        .collect();
    gae_with_next_values(
        &batch.rewards,
        &values,
        &next_values,
        &batch.dones,
        &batch.terminals,
        gamma,
        lambda,
    )
}
