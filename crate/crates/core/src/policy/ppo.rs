use alloc::vec::Vec;

use rand::Rng;

use super::GaussianActor;
use crate::numcore::{minibatches, Tape, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            epochs: 10,
            minibatch: 64,
        }
    }
}

/// Outcome of one actor update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PpoStats {
    /// Row-weighted mean clipped objective per epoch, measured before each step.
    pub objective: Vec<f64>,
    /// Minibatches dropped because the ratio or gradient was not finite.
    pub skipped: usize,
}

/// Clipped surrogate `mean_t min(ρ_t A_t, clip(ρ_t, 1-ε, 1+ε) A_t)` and its
/// gradient with respect to the actor parameters.
pub fn clipped_objective(
    actor: &GaussianActor,
    obs: &Tensor,
    raw_actions: &Tensor,
    old_log_probs: &[f64],
    advantages: &[f64],
    clip: f64,
) -> Result<(f64, Vec<Tensor>)> {
    let rows = obs.rows();
    if old_log_probs.len() != rows || advantages.len() != rows || raw_actions.rows() != rows {
        return Err(Error::dim("ppo minibatch rows", rows, old_log_probs.len().min(advantages.len())));
    }
    actor.check_obs(obs)?;
    let mut tape = Tape::new();
    let (params, logp) = actor.record_log_probs(&mut tape, obs, raw_actions)?;
    let old = tape.leaf(Tensor::matrix(rows, 1, old_log_probs.to_vec())?);
    let adv = tape.leaf(Tensor::matrix(rows, 1, advantages.to_vec())?);
    let log_ratio = tape.sub(logp, old)?;
    let ratio = tape.exp(log_ratio);
    let surr1 = tape.mul(ratio, adv)?;
    let clipped = tape.clamp(ratio, 1.0 - clip, 1.0 + clip);
    let surr2 = tape.mul(clipped, adv)?;
    let surr = tape.min(surr1, surr2)?;
    let objective = tape.mean(surr);
    let loss = tape.scale(objective, -1.0);
    let value = tape.value(objective).item();
    if !tape.value(ratio).all_finite() || !value.is_finite() {
        return Err(Error::NonFinite(alloc::format!("probability ratio is not finite (objective {value})")));
    }
    let grads = tape.backward(loss)?;
    Ok((value, params.iter().map(|&p| grads.wrt(p)).collect()))
}

/// PPO-clip update of one actor on its own observations, pre-clamp actions,
/// behaviour log-probabilities and advantages.
pub fn ppo_actor_update<R: Rng + ?Sized>(
    actor: &mut GaussianActor,
    obs: &Tensor,
    raw_actions: &Tensor,
    old_log_probs: &[f64],
    advantages: &[f64],
    config: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    let rows = obs.rows();
    if rows == 0 {
        return Err(Error::contract("ppo update needs at least one transition"));
    }
    let mut stats = PpoStats::default();
    for _ in 0..config.epochs {
        let mut total = 0.0;
        let mut counted = 0usize;
        for idx in minibatches(rows, config.minibatch, rng) {
            let old: Vec<f64> = idx.iter().map(|&t| old_log_probs[t]).collect();
            let adv: Vec<f64> = idx.iter().map(|&t| advantages[t]).collect();
            let step = clipped_objective(
                actor,
                &obs.gather_rows(&idx),
                &raw_actions.gather_rows(&idx),
                &old,
                &adv,
                config.clip,
            )
            .and_then(|(value, grads)| actor.apply_gradients(&grads).map(|()| value));
            match step {
                Ok(value) => {
                    total += value * idx.len() as f64;
                    counted += idx.len();
                }
                Err(Error::NonFinite(_)) => stats.skipped += 1,
                Err(e) => return Err(e),
            }
        }
        stats.objective.push(if counted > 0 { total / counted as f64 } else { f64::NAN });
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Activation, Mlp};
    use crate::policy::ActorConfig;
    use crate::rng::rng_for;
    use alloc::vec;

    fn actor(seed: u64) -> GaussianActor {
        let mut rng = rng_for(seed, &[]);
        let mut a = GaussianActor::new(2, 1, &ActorConfig::default(), &mut rng);
        // non-zero output layer so gradients reach every parameter
        a.mean_net = Mlp::new(&[2, 32, 32, 32, 1], Activation::Tanh, Activation::Tanh, &mut rng);
        a = GaussianActor::from_parts(a.mean_net, a.log_std, &ActorConfig::default());
        a
    }

    fn data(actor: &GaussianActor, rows: usize) -> (Tensor, Tensor, Vec<f64>) {
        let mut rng = rng_for(77, &[]);
        let obs = Tensor::matrix(rows, 2, (0..rows * 2).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let raw: Vec<f64> = (0..rows).map(|t| actor.act(obs.row(t), &mut rng, false).unwrap().raw[0]).collect();
        let raw = Tensor::matrix(rows, 1, raw).unwrap();
        let lp = actor.log_probs(&obs, &raw).unwrap();
        (obs, raw, lp)
    }

    #[test]
    fn ratio_is_one_at_the_behaviour_policy() {
        let a = actor(0);
        let (obs, raw, lp) = data(&a, 16);
        let adv: Vec<f64> = (0..16).map(|t| t as f64 - 7.5).collect();
        let (obj, _) = clipped_objective(&a, &obs, &raw, &lp, &adv, 0.2).unwrap();
        let mean_adv = adv.iter().sum::<f64>() / 16.0;
        assert!((obj - mean_adv).abs() < 1e-12);
        let again = a.log_probs(&obs, &raw).unwrap();
        assert_eq!(again, lp);
    }

    #[test]
    fn zero_advantage_leaves_parameters_unchanged() {
        let mut a = actor(1);
        let before = a.clone();
        let (obs, raw, lp) = data(&a, 32);
        let mut rng = rng_for(2, &[]);
        ppo_actor_update(&mut a, &obs, &raw, &lp, &[0.0; 32], &PpoConfig::default(), &mut rng).unwrap();
        assert_eq!(a.mean_net, before.mean_net);
        assert_eq!(a.log_std, before.log_std);
    }

    #[test]
    fn clip_plateau_has_zero_gradient() {
        let a = actor(3);
        let (obs, raw, lp) = data(&a, 1);
        // pretend the behaviour policy was much less likely to pick this action
        let old = vec![lp[0] - 1.0];
        let psi = 2.0;
        let (obj, grads) = clipped_objective(&a, &obs, &raw, &old, &[psi], 0.2).unwrap();
        assert!((obj - 1.2 * psi).abs() < 1e-12);
        assert!(grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
        // finite differences agree: the objective is flat around θ
        let mut bumped = a.clone();
        bumped.log_std.data_mut()[0] += 1e-5;
        let (obj2, _) = clipped_objective(&bumped, &obs, &raw, &old, &[psi], 0.2).unwrap();
        assert_eq!(obj2, obj);
    }

    #[test]
    fn nan_ratio_skips_the_minibatch() {
        let mut a = actor(4);
        let before = a.clone();
        let (obs, raw, mut lp) = data(&a, 4);
        lp[2] = f64::NAN;
        let mut rng = rng_for(5, &[]);
        let cfg = PpoConfig {
            epochs: 2,
            minibatch: 64,
            ..PpoConfig::default()
        };
        let stats = ppo_actor_update(&mut a, &obs, &raw, &lp, &[1.0; 4], &cfg, &mut rng).unwrap();
        assert_eq!(stats.skipped, 2);
        assert_eq!(a, before);
    }

    #[test]
    fn advantage_sign_moves_log_prob() {
        for (seed, psi) in [(6, 1.0), (7, -1.0), (8, 0.5), (9, -3.0)] {
            let mut a = actor(seed);
            let (obs, raw, lp) = data(&a, 1);
            let mut rng = rng_for(seed, &[1]);
            let cfg = PpoConfig {
                epochs: 1,
                ..PpoConfig::default()
            };
            ppo_actor_update(&mut a, &obs, &raw, &lp, &[psi], &cfg, &mut rng).unwrap();
            let after = a.log_probs(&obs, &raw).unwrap()[0];
            if psi > 0.0 {
                assert!(after >= lp[0], "psi {psi}: {after} < {}", lp[0]);
            } else {
                assert!(after <= lp[0], "psi {psi}: {after} > {}", lp[0]);
            }
        }
    }
}
