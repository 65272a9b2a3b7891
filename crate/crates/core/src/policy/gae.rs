use alloc::vec;
use alloc::vec::Vec;

use super::RolloutBatch;
use crate::{Error, Result};

fn check_lengths(n: usize, others: &[(&'static str, usize)]) -> Result<()> {
    for &(name, len) in others {
        if len != n {
            return Err(Error::dim(name, n, len));
        }
    }
    Ok(())
}

fn check_coefficients(gamma: f64, lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(alloc::format!(
            "gamma and lambda must lie in [0, 1], got {gamma} and {lambda}"
        )));
    }
    Ok(())
}

/// Generalized advantage estimation over a single stream where `values[t+1]`
/// is the value of the next state and `bootstrap_value` follows the last step.
/// `dones[t]` ends an episode with no bootstrap.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    bootstrap_value: f64,
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = rewards.len();
    check_lengths(n, &[("gae values", values.len()), ("gae dones", dones.len())])?;
    check_coefficients(gamma, lambda)?;
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    Ok(adv)
}

/// GAE with an explicit next-state value per step. Segments end at `dones`;
/// only `terminals` suppress the bootstrap, so truncated episodes still
/// bootstrap from `next_values`.
pub fn gae_with_next_values(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    dones: &[bool],
    terminals: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = rewards.len();
    check_lengths(
        n,
        &[
            ("gae values", values.len()),
            ("gae next values", next_values.len()),
            ("gae dones", dones.len()),
            ("gae terminals", terminals.len()),
        ],
    )?;
    check_coefficients(gamma, lambda)?;
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let boot = if terminals[t] { 0.0 } else { next_values[t] };
        let delta = rewards[t] + gamma * boot - values[t];
        let carry = if dones[t] { 0.0 } else { next_adv };
        next_adv = delta + gamma * lambda * carry;
        adv[t] = next_adv;
    }
    Ok(adv)
}

/// GAE over a rollout batch using its stored behaviour values.
pub fn batch_gae(batch: &RolloutBatch, gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    gae_with_next_values(
        &batch.rewards,
        &batch.values,
        &batch.next_values,
        &batch.dones,
        &batch.terminals,
        gamma,
        lambda,
    )
}

/// Zero mean, unit (population) variance. A constant input maps to zeros.
pub fn standardize(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = libm::sqrt(var);
    if sd < 1e-12 {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - mean) / sd).collect()
}
