//! Per-iteration CSV log.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which is enough
//! for every `f64` to parse back to the same bits. Model columns are empty for
//! methods without a world model. A run that aborts writes one final row
//! with status `failed` and `NaN` metrics.

use std::fs::File;
use std::path::{Path, PathBuf};

use semicredit_core::trainer::IterationStats;

use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    Failed,
}

impl RowStatus {
    fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub stats: IterationStats,
    pub status: RowStatus,
}

impl RunRow {
    pub fn ok(stats: IterationStats) -> Self {
        Self {
            stats,
            status: RowStatus::Ok,
        }
    }

    /// Marker row for an iteration that did not finish.
    pub fn failed(iteration: usize, env_steps: usize, n_agents: usize) -> Self {
        Self {
            stats: IterationStats {
                iteration,
                env_steps,
                mean_episode_reward: f64::NAN,
                episode_reward_std: f64::NAN,
                mean_abs_action: vec![f64::NAN; n_agents],
                model_delta_mse: None,
                model_reward_mse: None,
                critic_loss: f64::NAN,
                mean_psi: vec![f64::NAN; n_agents],
                ppo_skipped: 0,
            },
            status: RowStatus::Failed,
        }
    }
}

pub fn header(n_agents: usize) -> Vec<String> {
    let mut h: Vec<String> = ["iteration", "env_steps", "mean_episode_reward", "episode_reward_std"]
        .map(String::from)
        .to_vec();
    h.extend((0..n_agents).map(|i| format!("mean_abs_action_{i}")));
    h.extend(["model_delta_mse", "model_reward_mse", "critic_loss"].map(String::from));
    h.extend((0..n_agents).map(|i| format!("mean_psi_{i}")));
    h.extend(["ppo_skipped", "status"].map(String::from));
    h
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn record(row: &RunRow) -> Vec<String> {
    let s = &row.stats;
    let mut r = vec![
        s.iteration.to_string(),
        s.env_steps.to_string(),
        fmt(s.mean_episode_reward),
        fmt(s.episode_reward_std),
    ];
    r.extend(s.mean_abs_action.iter().copied().map(fmt));
    r.push(s.model_delta_mse.map(fmt).unwrap_or_default());
    r.push(s.model_reward_mse.map(fmt).unwrap_or_default());
    r.push(fmt(s.critic_loss));
    r.extend(s.mean_psi.iter().copied().map(fmt));
    r.push(s.ppo_skipped.to_string());
    r.push(row.status.as_str().to_string());
    r
}

/// Append-only writer; every row is flushed as soon as it is written.
pub struct RunLog {
    path: PathBuf,
    n_agents: usize,
    writer: csv::Writer<File>,
}

impl RunLog {
    /// Creates (or truncates) the file and writes the header.
    pub fn create(path: &Path, n_agents: usize) -> Result<Self> {
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut log = Self {
            path: path.to_path_buf(),
            n_agents,
            writer: csv::Writer::from_writer(file),
        };
        log.write(&header(n_agents))?;
        Ok(log)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write(&mut self, fields: &[String]) -> Result<()> {
        self.writer
            .write_record(fields)
            .and_then(|()| self.writer.flush().map_err(csv::Error::from))
            .map_err(|e| HarnessError::format(&self.path, e.to_string()))
    }

    pub fn append(&mut self, row: &RunRow) -> Result<()> {
        let s = &row.stats;
        if s.mean_abs_action.len() != self.n_agents || s.mean_psi.len() != self.n_agents {
            return Err(HarnessError::format(&self.path, "row has the wrong number of agents"));
        }
        self.write(&record(row))
    }

    /// Reads a log back; returns the agent count and the rows.
    pub fn read(path: &Path) -> Result<(usize, Vec<RunRow>)> {
        let bad = |msg: String| HarnessError::format(path, msg);
        let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let head: Vec<String> = reader
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(String::from)
            .collect();
        let n = head.iter().filter(|h| h.starts_with("mean_abs_action_")).count();
        if head != header(n) {
            return Err(bad(format!("unexpected header {head:?}")));
        }
        let mut rows = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let field = |j: usize| rec.get(j).unwrap_or("");
            let float = |j: usize| {
                field(j)
                    .parse::<f64>()
                    .map_err(|_| bad(format!("row {}: column {} is not a number", line + 1, head[j])))
            };
            let int = |j: usize| {
                field(j)
                    .parse::<usize>()
                    .map_err(|_| bad(format!("row {}: column {} is not an integer", line + 1, head[j])))
            };
            let optional = |j: usize| if field(j).is_empty() { Ok(None) } else { float(j).map(Some) };
            let floats = |from: usize| (from..from + n).map(float).collect::<Result<Vec<_>>>();
            let m = 4 + n;
            let status = match field(m + 3 + n + 1) {
                "ok" => RowStatus::Ok,
                "failed" => RowStatus::Failed,
                other => return Err(bad(format!("row {}: unknown status {other:?}", line + 1))),
            };
            rows.push(RunRow {
                stats: IterationStats {
                    iteration: int(0)?,
                    env_steps: int(1)?,
                    mean_episode_reward: float(2)?,
                    episode_reward_std: float(3)?,
                    mean_abs_action: floats(4)?,
                    model_delta_mse: optional(m)?,
                    model_reward_mse: optional(m + 1)?,
                    critic_loss: float(m + 2)?,
                    mean_psi: floats(m + 3)?,
                    ppo_skipped: int(m + 3 + n)?,
                },
                status,
            });
        }
        Ok((n, rows))
    }
}
