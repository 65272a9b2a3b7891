//! Training, evaluation and credit-report drivers behind the CLI.

use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use semicredit_core::credit::{CreditConfig, EvaluatorKind, SpecId};
use semicredit_core::envkit::EnvId;
use semicredit_core::trainer::{credit_rollout, evaluate_policy, EvalSummary, IterationStats, Trainer};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::runlog::{RunLog, RunRow};
use crate::{HarnessError, Result};

pub const RUNLOG_FILE: &str = "runlog.csv";
pub const TIMING_FILE: &str = "timing.csv";

/// Output directory of one seeded run: `out_dir/<group>/seed_<seed>`.
pub fn run_dir(config: &RunConfig, seed: u64) -> PathBuf {
    config.out_dir.join(config.group_name()).join(format!("seed_{seed}"))
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub dir: PathBuf,
    pub rows: Vec<IterationStats>,
}

struct Timing {
    path: PathBuf,
    file: File,
}

impl Timing {
    fn create(path: PathBuf) -> Result<Self> {
        let mut file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        writeln!(file, "iteration,seconds").map_err(|e| HarnessError::io(&path, e))?;
        Ok(Self { path, file })
    }

    fn record(&mut self, iteration: usize, seconds: f64) -> Result<()> {
        writeln!(self.file, "{iteration},{seconds:.6}").map_err(|e| HarnessError::io(&self.path, e))
    }
}

fn snapshot(config: &RunConfig, trainer: &Trainer, iteration: usize, complete: bool) -> Checkpoint {
    Checkpoint {
        config: config.clone(),
        seed: trainer.seed(),
        iteration,
        complete,
        policy: trainer.policy().clone(),
        model: trainer.model().cloned(),
    }
}

/// Trains one seed. Writes the run log, a wall-clock sidecar, periodic
/// checkpoints under `checkpoints/iter_<k>` and the final one under `final`.
/// On a failure the log gets a `failed` row and the current state goes to
/// `abort`.
pub fn train_seed(config: &RunConfig, seed: u64) -> Result<RunResult> {
    let dir = run_dir(config, seed);
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let cfg_path = dir.join("config.txt");
    fs::write(&cfg_path, config.to_text()).map_err(|e| HarnessError::io(&cfg_path, e))?;

    let mut trainer = Trainer::new(config.train.clone(), seed)?;
    let n = trainer.policy().n_agents();
    let mut log = RunLog::create(&dir.join(RUNLOG_FILE), n)?;
    let mut timing = Timing::create(dir.join(TIMING_FILE))?;
    let mut rows = Vec::with_capacity(config.train.iterations);
    for k in 0..config.train.iterations {
        let start = Instant::now();
        match trainer.iterate() {
            Ok(stats) => {
                log.append(&RunRow::ok(stats.clone()))?;
                timing.record(k, start.elapsed().as_secs_f64())?;
                rows.push(stats);
            }
            Err(source) => {
                let steps = rows.last().map_or(0, |r: &IterationStats| r.env_steps);
                log.append(&RunRow::failed(k, steps, n))?;
                let dump = dir.join("abort");
                snapshot(config, &trainer, k, false).save(&dump)?;
                return Err(HarnessError::Aborted {
                    iteration: k,
                    dump,
                    source,
                });
            }
        }
        let done = k + 1;
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.train.iterations {
            snapshot(config, &trainer, done, true).save(&dir.join("checkpoints").join(format!("iter_{done:05}")))?;
        }
    }
    snapshot(config, &trainer, config.train.iterations, true).save(&dir.join("final"))?;
    Ok(RunResult { seed, dir, rows })
}

/// Trains every seed listed in the config, in order.
pub fn train(config: &RunConfig) -> Result<Vec<RunResult>> {
    config.train.validate()?;
    config.train.seeds.iter().map(|&s| train_seed(config, s)).collect()
}

fn load_for_env(ckpt: &Path, env: EnvId) -> Result<(Checkpoint, Box<dyn semicredit_core::envkit::MultiAgentEnv>)> {
    let ck = Checkpoint::load(ckpt)?;
    let env = env.make();
    ck.check_env(env.spec())?;
    Ok((ck, env))
}

/// Deterministic (mean-action) evaluation of a checkpoint.
pub fn evaluate(ckpt: &Path, env: EnvId, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let (ck, mut env) = load_for_env(ckpt, env)?;
    Ok(evaluate_policy(&ck.policy, env.as_mut(), episodes, seed)?)
}

#[derive(Debug, Clone, Default)]
pub struct CreditReportOptions {
    /// Semivalue to report; defaults to the one the checkpoint was trained with, else Shapley.
    pub spec: Option<SpecId>,
    pub samples_per_agent: Option<usize>,
    pub exact: bool,
    /// Agents whose actions are forced to the default.
    pub dummies: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreditRow {
    pub iteration: usize,
    pub t: usize,
    pub agent: usize,
    pub psi: f64,
    pub coalition_samples: usize,
}

/// Rolls out the frozen policy for `steps` steps and computes every agent's
/// credit at every step.
pub fn credit_report(
    ckpt: &Path,
    env: EnvId,
    steps: usize,
    seed: u64,
    options: &CreditReportOptions,
) -> Result<Vec<CreditRow>> {
    let (ck, mut env) = load_for_env(ckpt, env)?;
    let train = &ck.config.train;
    let trained = train.credit_config();
    let evaluator = match (&trained, &ck.model, &ck.policy.q_critic) {
        (Some(c), _, _) => c.evaluator,
        (None, Some(_), _) => EvaluatorKind::ModelBased,
        (None, None, Some(_)) => EvaluatorKind::QCritic,
        (None, None, None) => {
            return Err(HarnessError::Incompatible(
                "checkpoint has neither a world model nor a Q-critic to value coalitions".into(),
            ))
        }
    };
    let credit = CreditConfig {
        spec: options.spec.or(trained.as_ref().map(|c| c.spec)).unwrap_or(SpecId::Shapley),
        samples_per_agent: options.samples_per_agent.unwrap_or(train.samples_per_agent),
        evaluator,
        gamma: train.gamma,
        exact: options.exact,
    };
    credit.validate(env.spec().n_agents)?;
    let (_, result) = credit_rollout(
        &ck.policy,
        ck.model.as_ref(),
        env.as_mut(),
        steps,
        seed,
        &credit,
        &options.dummies,
    )?;
    Ok(result
        .psi
        .iter()
        .enumerate()
        .flat_map(|(t, row)| {
            row.iter().enumerate().map(move |(agent, &psi)| CreditRow {
                iteration: ck.iteration,
                t,
                agent,
                psi,
                coalition_samples: result.coalition_samples,
            })
        })
        .collect())
}

pub fn write_credit_csv(path: &Path, rows: &[CreditRow]) -> Result<()> {
    let bad = |e: csv::Error| HarnessError::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(bad)?;
    w.write_record(["iteration", "t", "agent", "psi", "coalition_samples"]).map_err(bad)?;
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            r.t.to_string(),
            r.agent.to_string(),
            format!("{:.16e}", r.psi),
            r.coalition_samples.to_string(),
        ])
        .map_err(bad)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}
