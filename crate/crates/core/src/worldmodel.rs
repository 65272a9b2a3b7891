//! Learned one-step dynamics and reward models.
//!
//! `f_s` predicts the state change and `f_r` the reward, both from the
//! concatenated state and joint action. Inputs are standardized with running
//! statistics; state deltas are only rescaled (never shifted), so a zero
//! network predicts "nothing moves" exactly.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::numcore::{fit_mse, Activation, Adam, AdamConfig, Mlp, Tensor};
use crate::policy::RolloutBatch;
use crate::{Error, Result};

/// Running per-coordinate mean and variance over every row seen.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn from_parts(count: f64, mean: Vec<f64>, m2: Vec<f64>) -> Result<Self> {
        if mean.len() != m2.len() {
            return Err(Error::dim("RunningStats parts", mean.len(), m2.len()));
        }
        Ok(Self { count, mean, m2 })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    /// Merges a block of rows (Chan et al. pairwise update).
    pub fn update<R: AsRef<[f64]>>(&mut self, rows: &[R]) {
        if rows.is_empty() {
            return;
        }
        let nb = rows.len() as f64;
        let d = self.dim();
        let mut mean_b = vec![0.0; d];
        for r in rows {
            for (m, x) in mean_b.iter_mut().zip(r.as_ref()) {
                *m += x;
            }
        }
        mean_b.iter_mut().for_each(|m| *m /= nb);
        let mut m2_b = vec![0.0; d];
        for r in rows {
            for ((s, x), m) in m2_b.iter_mut().zip(r.as_ref()).zip(&mean_b) {
                *s += (x - m) * (x - m);
            }
        }
        let na = self.count;
        let n = na + nb;
        for j in 0..d {
            let delta = mean_b[j] - self.mean[j];
            self.mean[j] += delta * nb / n;
            self.m2[j] += m2_b[j] + delta * delta * na * nb / n;
        }
        self.count = n;
    }

    /// Population standard deviation, replaced by 1 where it is degenerate.
    pub fn scale(&self) -> Vec<f64> {
        self.m2
            .iter()
            .map(|&m2| {
                let sd = if self.count > 0.0 {
                    libm::sqrt(m2 / self.count)
                } else {
                    0.0
                };
                if sd > 1e-8 {
                    sd
                } else {
                    1.0
                }
            })
            .collect()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let s = self.scale();
        x.iter()
            .zip(&self.mean)
            .zip(&s)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        let s = self.scale();
        z.iter()
            .zip(&self.mean)
            .zip(&s)
            .map(|((z, m), s)| z * s + m)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldModelConfig {
    pub state_hidden: Vec<usize>,
    pub reward_hidden: Vec<usize>,
    pub learning_rate: f64,
}

impl Default for WorldModelConfig {
    fn default() -> Self {
        Self {
            state_hidden: vec![128; 4],
            reward_hidden: vec![128; 3],
            learning_rate: 1e-3,
        }
    }
}

/// Training-set errors in original units, before and after one fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitStats {
    pub delta_mse_before: f64,
    pub reward_mse_before: f64,
    pub delta_mse: f64,
    pub reward_mse: f64,
    /// Per-epoch normalized training loss of each network.
    pub delta_trace: Vec<f64>,
    pub reward_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldModel {
    state_dim: usize,
    action_dim: usize,
    pub f_s: Mlp,
    pub f_r: Mlp,
    pub input_stats: RunningStats,
    pub delta_stats: RunningStats,
    pub reward_stats: RunningStats,
    adam_s: Adam,
    adam_r: Adam,
}

fn build_net<R: Rng + ?Sized>(input: usize, hidden: &[usize], output: usize, rng: &mut R) -> Mlp {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    let mut mlp = Mlp::new(&sizes, Activation::Relu, Activation::Identity, rng);
    let last = mlp.layers_mut().last_mut().expect("non-empty");
    last.weight.data_mut().fill(0.0);
    last.bias.data_mut().fill(0.0);
    mlp
}

impl WorldModel {
    /// Fresh model. The output layers start at zero, so before any fitting the
    /// model predicts an unchanged state and a zero reward.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        config: &WorldModelConfig,
        rng: &mut R,
    ) -> Self {
        let input = state_dim + action_dim;
        let f_s = build_net(input, &config.state_hidden, state_dim, rng);
        let f_r = build_net(input, &config.reward_hidden, 1, rng);
        Self::from_parts(
            f_s,
            f_r,
            RunningStats::new(input),
            RunningStats::new(state_dim),
            RunningStats::new(1),
            config.learning_rate,
        )
        .expect("shapes built consistently")
    }

    pub fn from_parts(
        f_s: Mlp,
        f_r: Mlp,
        input_stats: RunningStats,
        delta_stats: RunningStats,
        reward_stats: RunningStats,
        learning_rate: f64,
    ) -> Result<Self> {
        let state_dim = f_s.output_dim();
        let input = f_s.input_dim();
        if input < state_dim {
            return Err(Error::dim("world model input", state_dim, input));
        }
        if f_r.input_dim() != input {
            return Err(Error::dim("reward model input", input, f_r.input_dim()));
        }
        if f_r.output_dim() != 1 {
            return Err(Error::dim("reward model output", 1, f_r.output_dim()));
        }
        if input_stats.dim() != input || delta_stats.dim() != state_dim || reward_stats.dim() != 1 {
            return Err(Error::contract("world model statistics do not match network shapes"));
        }
        let adam_s = Adam::new(AdamConfig::with_lr(learning_rate), &f_s.params());
        let adam_r = Adam::new(AdamConfig::with_lr(learning_rate), &f_r.params());
        Ok(Self {
            state_dim,
            action_dim: input - state_dim,
            f_s,
            f_r,
            input_stats,
            delta_stats,
            reward_stats,
            adam_s,
            adam_r,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn normalized_inputs(&self, inputs: &Tensor) -> Result<Tensor> {
        let (rows, width) = inputs.require_matrix("world model inputs")?;
        if width != self.state_dim + self.action_dim {
            return Err(Error::dim("world model input width", self.state_dim + self.action_dim, width));
        }
        let scale = self.input_stats.scale();
        let mean = self.input_stats.mean();
        let mut data = inputs.data().to_vec();
        for row in data.chunks_exact_mut(width) {
            for j in 0..width {
                row[j] = (row[j] - mean[j]) / scale[j];
            }
        }
        Tensor::matrix(rows, width, data)
    }

    /// Batched prediction for rows of `s ⊕ a`. Returns `(ŝ, r̂)` with
    /// `ŝ = s + f_s(s, a)` as a `(rows, state_dim)` matrix.
    pub fn predict_batch(&self, inputs: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let x = self.normalized_inputs(inputs)?;
        let rows = x.rows();
        let width = self.state_dim + self.action_dim;
        let delta = self.f_s.forward(&x)?;
        let ds = self.delta_stats.scale();
        let mut next = Vec::with_capacity(rows * self.state_dim);
        for t in 0..rows {
            let s = &inputs.data()[t * width..t * width + self.state_dim];
            for (j, sj) in s.iter().enumerate() {
                next.push(sj + delta.data()[t * self.state_dim + j] * ds[j]);
            }
        }
        let r = self.f_r.forward(&x)?;
        let (rm, rs) = (self.reward_stats.mean()[0], self.reward_stats.scale()[0]);
        let rewards = r.data().iter().map(|z| z * rs + rm).collect();
        Ok((Tensor::matrix(rows, self.state_dim, next)?, rewards))
    }

    /// Single prediction from a global state and a flattened joint action.
    pub fn predict(&self, state: &[f64], joint_action: &[f64]) -> Result<(Vec<f64>, f64)> {
        if state.len() != self.state_dim {
            return Err(Error::dim("predict state", self.state_dim, state.len()));
        }
        if joint_action.len() != self.action_dim {
            return Err(Error::dim("predict action", self.action_dim, joint_action.len()));
        }
        let mut row = state.to_vec();
        row.extend_from_slice(joint_action);
        let (next, r) = self.predict_batch(&Tensor::row_vector(&row))?;
        Ok((next.into_data(), r[0]))
    }

    /// Steps whose next state is usable as a dynamics target.
    fn dynamics_rows(batch: &RolloutBatch) -> Vec<usize> {
        (0..batch.len()).filter(|&t| !batch.terminals[t]).collect()
    }

    /// Delta and reward MSE in original units over `batch`; the delta error is
    /// averaged over state coordinates and non-terminal steps.
    pub fn evaluate(&self, batch: &RolloutBatch) -> Result<(f64, f64)> {
        if batch.is_empty() {
            return Err(Error::contract("cannot evaluate a world model on an empty batch"));
        }
        let inputs = batch.state_action_matrix()?;
        let (next, rewards) = self.predict_batch(&inputs)?;
        let rows = Self::dynamics_rows(batch);
        let mut delta_se = 0.0;
        for &t in &rows {
            for (p, y) in next.row(t).iter().zip(&batch.next_states[t]) {
                delta_se += (p - y) * (p - y);
            }
        }
        let delta_mse = if rows.is_empty() {
            0.0
        } else {
            delta_se / (rows.len() * self.state_dim) as f64
        };
        let reward_mse = rewards
            .iter()
            .zip(&batch.rewards)
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>()
            / batch.len() as f64;
        Ok((delta_mse, reward_mse))
    }

    /// Folds `batch` into the normalizer statistics, then fits both networks
    /// by minibatch Adam, warm-starting from the current parameters.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        batch: &RolloutBatch,
        epochs: usize,
        minibatch: usize,
        rng: &mut R,
    ) -> Result<FitStats> {
        if batch.is_empty() {
            return Err(Error::contract("cannot fit a world model on an empty batch"));
        }
        let raw_inputs = batch.state_action_matrix()?;
        if raw_inputs.cols() != self.state_dim + self.action_dim {
            return Err(Error::dim(
                "world model batch width",
                self.state_dim + self.action_dim,
                raw_inputs.cols(),
            ));
        }
        let dyn_rows = Self::dynamics_rows(batch);
        let deltas: Vec<Vec<f64>> = dyn_rows
            .iter()
            .map(|&t| {
                batch.next_states[t]
                    .iter()
                    .zip(&batch.states[t])
                    .map(|(n, s)| n - s)
                    .collect()
            })
            .collect();
        let rewards: Vec<[f64; 1]> = batch.rewards.iter().map(|&r| [r]).collect();

        let (delta_mse_before, reward_mse_before) = self.evaluate(batch)?;

        let input_rows: Vec<&[f64]> = (0..raw_inputs.rows()).map(|t| raw_inputs.row(t)).collect();
        self.input_stats.update(&input_rows);
        self.reward_stats.update(&rewards);
        // Deltas are rescaled but not centred; the mean is tracked for reporting only.
        self.delta_stats.update(&deltas);

        let x = self.normalized_inputs(&raw_inputs)?;
        let mut delta_trace = Vec::new();
        if !dyn_rows.is_empty() {
            let ds = self.delta_stats.scale();
            let targets: Vec<Vec<f64>> = deltas
                .iter()
                .map(|d| d.iter().zip(&ds).map(|(v, s)| v / s).collect())
                .collect();
            let targets = Tensor::from_rows(&targets, self.state_dim)?;
            let xs = x.gather_rows(&dyn_rows);
            delta_trace = fit_mse(&mut self.f_s, &mut self.adam_s, &xs, &targets, epochs, minibatch, rng)?;
        }
        let (rm, rs) = (self.reward_stats.mean()[0], self.reward_stats.scale()[0]);
        let targets: Vec<f64> = batch.rewards.iter().map(|r| (r - rm) / rs).collect();
        let targets = Tensor::matrix(batch.len(), 1, targets)?;
        let reward_trace = fit_mse(&mut self.f_r, &mut self.adam_r, &x, &targets, epochs, minibatch, rng)?;

        let (delta_mse, reward_mse) = self.evaluate(batch)?;
        if !delta_mse.is_finite() || !reward_mse.is_finite() {
            return Err(Error::NonFinite(alloc::format!(
                "world model fit diverged: delta mse {delta_mse}, reward mse {reward_mse}"
            )));
        }
        Ok(FitStats {
            delta_mse_before,
            reward_mse_before,
            delta_mse,
            reward_mse,
            delta_trace,
            reward_trace,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envkit::{LinearTeam, MultiAgentEnv};
    use crate::policy::Transition;
    use crate::rng::rng_for;

    fn small_config() -> WorldModelConfig {
        WorldModelConfig {
            state_hidden: vec![32, 32],
            reward_hidden: vec![32, 32],
            learning_rate: 1e-3,
        }
    }

    /// Random-action transitions from the linear team, restarting every episode.
    pub(crate) fn linear_batch(steps: usize, seed: u64) -> RolloutBatch {
        let mut env = LinearTeam::default_team();
        let n = env.spec().n_agents;
        let dims = env.spec().action_dims.clone();
        let mut rng = rng_for(seed, &[]);
        let mut batch = RolloutBatch::new(n);
        let mut obs = env.reset(seed);
        for _ in 0..steps {
            let a: Vec<Vec<f64>> = dims
                .iter()
                .map(|&d| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let r = env.step(&a).unwrap();
            batch
                .push(Transition {
                    state: obs.state.clone(),
                    next_state: r.next_state.clone(),
                    obs: obs.per_agent.clone(),
                    actions: a.clone(),
                    raw_actions: a,
                    log_probs: vec![0.0; n],
                    reward: r.reward,
                    done: r.done,
                    terminal: r.terminal,
                })
                .unwrap();
            obs = if r.done {
                env.reset(seed)
            } else {
                crate::envkit::Observation {
                    state: r.next_state,
                    per_agent: r.per_agent_obs,
                }
            };
        }
        batch
    }

    #[test]
    fn zero_network_keeps_the_state() {
        let mut rng = rng_for(0, &[]);
        let wm = WorldModel::new(3, 2, &WorldModelConfig::default(), &mut rng);
        let s = [0.3, -7.0, 1e6];
        let (next, r) = wm.predict(&s, &[0.5, -0.5]).unwrap();
        assert_eq!(next, s.to_vec());
        assert_eq!(r, 0.0);
    }

    #[test]
    fn residual_identity_survives_statistics() {
        let mut rng = rng_for(1, &[]);
        let mut wm = WorldModel::new(2, 1, &small_config(), &mut rng);
        wm.input_stats.update(&[[1.0, 2.0, 3.0], [4.0, -5.0, 6.0]]);
        wm.delta_stats.update(&[[0.5, 9.0], [1.5, -3.0]]);
        wm.reward_stats.update(&[[2.0], [4.0]]);
        let (next, r) = wm.predict(&[0.25, -0.75], &[0.1]).unwrap();
        assert_eq!(next, vec![0.25, -0.75]);
        assert_eq!(r, 3.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut rng = rng_for(0, &[]);
        let wm = WorldModel::new(3, 2, &small_config(), &mut rng);
        assert!(matches!(wm.predict(&[0.0; 2], &[0.0; 2]), Err(Error::Dimension { .. })));
        assert!(matches!(wm.predict(&[0.0; 3], &[0.0; 3]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn running_stats_match_two_pass_statistics() {
        let rows: Vec<[f64; 2]> = (0..50).map(|i| [i as f64 * 0.3, (i as f64).sin() * 4.0]).collect();
        let mut stats = RunningStats::new(2);
        stats.update(&rows[..13]);
        stats.update(&rows[13..]);
        for j in 0..2 {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / 50.0;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / 50.0;
            assert!((stats.mean()[j] - mean).abs() < 1e-12);
            assert!((stats.scale()[j] - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_round_trip() {
        let mut stats = RunningStats::new(3);
        stats.update(&[[1.0, 5.0, 0.0], [3.0, -5.0, 0.0], [2.0, 1.0, 0.0]]);
        let x = [0.7, -12.5, 4.0];
        let back = stats.denormalize(&stats.normalize(&x));
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn static_dataset_learns_zero_delta() {
        let mut batch = RolloutBatch::new(1);
        for t in 0..100 {
            let s = vec![t as f64 * 0.01, 1.0];
            batch
                .push(Transition {
                    state: s.clone(),
                    next_state: s,
                    obs: vec![vec![0.0]],
                    actions: vec![vec![(t as f64 * 0.1).sin()]],
                    raw_actions: vec![vec![0.0]],
                    log_probs: vec![0.0],
                    reward: 1.0,
                    done: false,
                    terminal: false,
                })
                .unwrap();
        }
        let mut rng = rng_for(2, &[]);
        let mut wm = WorldModel::new(2, 1, &small_config(), &mut rng);
        let stats = wm.fit(&batch, 20, 64, &mut rng).unwrap();
        assert!(stats.delta_mse < 1e-6, "{}", stats.delta_mse);
        assert!(stats.reward_mse < 1e-6, "{}", stats.reward_mse);
    }

    #[test]
    fn terminal_steps_are_not_dynamics_targets() {
        let mut batch = RolloutBatch::new(1);
        for t in 0..40 {
            let terminal = t % 2 == 1;
            let s = vec![0.0];
            batch
                .push(Transition {
                    state: s.clone(),
                    // a post-terminal "next state" that must be ignored
                    next_state: if terminal { vec![100.0] } else { s },
                    obs: vec![vec![0.0]],
                    actions: vec![vec![0.0]],
                    raw_actions: vec![vec![0.0]],
                    log_probs: vec![0.0],
                    reward: 0.0,
                    done: terminal,
                    terminal,
                })
                .unwrap();
        }
        let mut rng = rng_for(3, &[]);
        let mut wm = WorldModel::new(1, 1, &small_config(), &mut rng);
        let stats = wm.fit(&batch, 5, 8, &mut rng).unwrap();
        assert_eq!(stats.delta_mse, 0.0);
        assert_eq!(stats.delta_trace.len(), 5);
    }

    #[test]
    fn linear_team_fidelity_on_held_out_data() {
        let train = linear_batch(500, 11);
        let test = linear_batch(200, 12);
        let mut rng = rng_for(4, &[]);
        let mut wm = WorldModel::new(4, 2, &WorldModelConfig::default(), &mut rng);
        wm.fit(&train, 50, 64, &mut rng).unwrap();
        let (delta_mse, reward_mse) = wm.evaluate(&test).unwrap();
        assert!(delta_mse < 1e-3, "held-out delta mse {delta_mse}");
        assert!(reward_mse < 1e-2, "held-out reward mse {reward_mse}");
    }
}
