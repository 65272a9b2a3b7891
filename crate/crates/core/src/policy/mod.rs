//! Centralized critics, decentralized Gaussian actors, GAE and PPO-clip.

mod actor;
mod batch;
mod critic;
mod gae;
mod ppo;

use alloc::vec::Vec;

use rand::Rng;

pub use actor::{gaussian_log_prob, ActOutput, ActorConfig, GaussianActor};
pub use batch::{flatten, RolloutBatch, Transition};
pub use critic::{critic_update, q_critic_update, Critic, CriticConfig, QCritic, ValueNet};
pub use gae::{batch_gae, gae, gae_with_next_values, standardize};
pub use ppo::{clipped_objective, ppo_actor_update, PpoConfig, PpoStats};

use crate::envkit::EnvSpec;
use crate::rng::{derive_seed, rng_for};
use crate::Result;

/// One critic plus one actor per agent, and the optional Q-critic.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySet {
    pub critic: Critic,
    pub actors: Vec<GaussianActor>,
    pub q_critic: Option<QCritic>,
}

impl PolicySet {
    /// Every network draws its initial weights from its own stream under `seed`.
    pub fn new(
        spec: &EnvSpec,
        actor: &ActorConfig,
        critic: &CriticConfig,
        with_q_critic: bool,
        seed: u64,
    ) -> Self {
        let s = spec.global_state_dim();
        let critic_net = Critic::new(s, critic, &mut rng_for(seed, &[0]));
        let actors = (0..spec.n_agents)
            .map(|i| {
                let mut rng = rng_for(seed, &[1, i as u64]);
                GaussianActor::new(spec.obs_dims[i], spec.action_dims[i], actor, &mut rng)
            })
            .collect();
        let q_critic = with_q_critic
            .then(|| QCritic::new(s, spec.joint_action_dim(), critic, &mut rng_for(seed, &[2])));
        Self {
            critic: critic_net,
            actors,
            q_critic,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.actors.len()
    }

    /// Every agent acts on its own observation with its own generator.
    pub fn act<R: Rng>(
        &self,
        per_agent_obs: &[Vec<f64>],
        rngs: &mut [R],
        deterministic: bool,
    ) -> Result<Vec<ActOutput>> {
        self.actors
            .iter()
            .zip(per_agent_obs)
            .zip(rngs.iter_mut())
            .map(|((a, o), r)| a.act(o, r, deterministic))
            .collect()
    }

    /// Seed for agent `i`'s stream under a run seed; used by rollouts.
    pub fn agent_seed(seed: u64, i: usize) -> u64 {
        derive_seed(seed, &[i as u64])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envkit::EnvId;
    use crate::numcore::Tensor;

    #[test]
    fn updating_one_actor_leaves_the_others_alone() {
        let env = EnvId::Chain4.make();
        let mut set = PolicySet::new(env.spec(), &ActorConfig::default(), &CriticConfig::default(), false, 3);
        let before = set.clone();
        let obs = Tensor::matrix(4, 2, alloc::vec![0.1, 0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8]).unwrap();
        let raw = Tensor::matrix(4, 1, alloc::vec![0.5, -0.5, 0.2, 0.9]).unwrap();
        let lp = set.actors[2].log_probs(&obs, &raw).unwrap();
        let mut rng = rng_for(0, &[]);
        ppo_actor_update(&mut set.actors[2], &obs, &raw, &lp, &[1.0, -1.0, 2.0, 0.5], &PpoConfig::default(), &mut rng)
            .unwrap();
        assert_ne!(set.actors[2], before.actors[2]);
        for j in [0, 1, 3] {
            assert_eq!(set.actors[j], before.actors[j]);
        }
        assert_eq!(set.critic, before.critic);
    }

    #[test]
    fn construction_is_seed_determined() {
        let env = EnvId::Chain6.make();
        let a = PolicySet::new(env.spec(), &ActorConfig::default(), &CriticConfig::default(), true, 9);
        let b = PolicySet::new(env.spec(), &ActorConfig::default(), &CriticConfig::default(), true, 9);
        let c = PolicySet::new(env.spec(), &ActorConfig::default(), &CriticConfig::default(), true, 10);
        assert_eq!(a, b);
        assert_ne!(a.critic, c.critic);
    }
}
