use proptest::prelude::*;
use semicredit_core::coopgame::Coalition;
use semicredit_core::credit::{
    coalition_value, per_agent_advantages, CoalitionEvaluator, CreditConfig, EvaluatorKind, Query, SpecId,
};
use semicredit_core::envkit::EnvId;
use semicredit_core::policy::{
    clipped_objective, flatten, ActorConfig, CriticConfig, PolicySet, RolloutBatch,
};
use semicredit_core::rng::{rng_for, Rng};
use semicredit_core::trainer::{collect_rollout, RolloutOptions};
use semicredit_core::worldmodel::{RunningStats, WorldModel, WorldModelConfig};
use semicredit_core::Result;

fn rollout(env: EnvId, steps: usize, seed: u64) -> RolloutBatch {
    let mut env = env.make();
    let spec = env.spec().clone();
    let policy = PolicySet::new(&spec, &ActorConfig::default(), &CriticConfig::default(), false, seed);
    let mut rngs: Vec<Rng> = (0..spec.n_agents).map(|i| rng_for(seed, &[9, i as u64])).collect();
    let mut episode = 0;
    let mut reset = || {
        episode += 1;
        seed + episode
    };
    collect_rollout(env.as_mut(), &policy, steps, &mut rngs, &mut reset, &RolloutOptions::default())
        .unwrap()
        .0
}

fn small_model(seed: u64) -> WorldModel {
    let cfg = WorldModelConfig {
        state_hidden: vec![32, 32],
        reward_hidden: vec![32, 32],
        learning_rate: 1e-3,
    };
    WorldModel::new(13, 4, &cfg, &mut rng_for(seed, &[]))
}

#[test]
fn fitting_lowers_training_error_for_most_seeds() {
    let seeds = 20;
    let mut improved = 0;
    for seed in 0..seeds {
        let batch = rollout(EnvId::Chain4, 256, seed);
        let mut model = small_model(seed);
        let stats = model.fit(&batch, 3, 64, &mut rng_for(seed, &[1])).unwrap();
        if stats.delta_mse <= stats.delta_mse_before && stats.reward_mse <= stats.reward_mse_before {
            improved += 1;
        }
    }
    assert!(improved * 100 >= 95 * seeds, "{improved}/{seeds} seeds improved");
}

/// Coalition value = sum of member actions' first components, weighted by agent.
struct Weighted {
    defaults: Vec<Vec<f64>>,
}

impl CoalitionEvaluator for Weighted {
    fn n_agents(&self) -> usize {
        self.defaults.len()
    }

    fn defaults(&self) -> &[Vec<f64>] {
        &self.defaults
    }

    fn evaluate(&self, queries: &[Query<'_>]) -> Result<Vec<f64>> {
        Ok(queries
            .iter()
            .map(|q| {
                let masked = semicredit_core::coopgame::mask_action(q.actions, q.coalition, &self.defaults).unwrap();
                q.state[0] + masked.iter().enumerate().map(|(i, a)| (i + 1) as f64 * a[0] * a[0]).sum::<f64>()
            })
            .collect())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normalization_round_trips(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..20),
                                 probe in prop::collection::vec(-1e3f64..1e3, 3)) {
        let mut stats = RunningStats::new(3);
        stats.update(&rows);
        let back = stats.denormalize(&stats.normalize(&probe));
        for (a, b) in back.iter().zip(&probe) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn zero_dynamics_network_predicts_the_same_state(seed in any::<u64>(), s in prop::collection::vec(-3.0f64..3.0, 13),
                                                     a in prop::collection::vec(-1.0f64..1.0, 4)) {
        let mut model = small_model(seed);
        let batch = rollout(EnvId::Chain4, 32, seed % 1000);
        model.fit(&batch, 1, 16, &mut rng_for(seed, &[2])).unwrap();
        for layer in model.f_s.layers_mut() {
            layer.weight.data_mut().fill(0.0);
            layer.bias.data_mut().fill(0.0);
        }
        let (next, _) = model.predict(&s, &a).unwrap();
        prop_assert_eq!(next, s);
    }

    #[test]
    fn observations_tile_the_state(env in prop::sample::select(EnvId::ALL.to_vec()), seed in 0u64..1000,
                                   actions in prop::collection::vec(-2.0f64..2.0, 64)) {
        let mut e = env.make();
        let spec = e.spec().clone();
        let obs = e.reset(seed);
        prop_assert_eq!(flatten(&obs.per_agent), obs.state);
        let mut k = 0;
        for _ in 0..5 {
            let a: Vec<Vec<f64>> = spec.action_dims.iter().map(|&d| (0..d).map(|_| { k += 1; actions[k % actions.len()] }).collect()).collect();
            let r = e.step(&a).unwrap();
            prop_assert_eq!(flatten(&r.per_agent_obs), r.next_state);
            if r.done {
                break;
            }
        }
    }

    #[test]
    fn clamped_actions_step_identically(env in prop::sample::select(EnvId::ALL.to_vec()), seed in 0u64..1000,
                                        actions in prop::collection::vec(-3.0f64..3.0, 16)) {
        let (mut e1, mut e2) = (env.make(), env.make());
        let spec = e1.spec().clone();
        let (o1, o2) = (e1.reset(seed), e2.reset(seed));
        prop_assert_eq!(o1, o2);
        let a: Vec<Vec<f64>> = spec.action_dims.iter().enumerate().map(|(i, &d)| (0..d).map(|j| actions[(i + j) % actions.len()]).collect()).collect();
        let clamped = spec.clamp_action(&a).unwrap();
        prop_assert_eq!(e1.step(&a).unwrap(), e2.step(&clamped).unwrap());
    }

    #[test]
    fn non_member_actions_are_ignored(mask in 0u64..16, a in prop::collection::vec(-1.0f64..1.0, 4),
                                      b in prop::collection::vec(-1.0f64..1.0, 4), s0 in -1.0f64..1.0) {
        let eval = Weighted { defaults: vec![vec![0.0]; 4] };
        let c = Coalition::from_mask(4, mask).unwrap();
        let acts: Vec<Vec<f64>> = a.iter().map(|&x| vec![x]).collect();
        let other: Vec<Vec<f64>> = (0..4).map(|i| vec![if c.contains(i) { a[i] } else { b[i] }]).collect();
        let state = [s0];
        prop_assert_eq!(coalition_value(&eval, &state, &acts, c).unwrap(), coalition_value(&eval, &state, &other, c).unwrap());
        let full = coalition_value(&eval, &state, &acts, Coalition::full(4)).unwrap();
        let direct = s0 + a.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x * x).sum::<f64>();
        prop_assert_eq!(full, direct);
    }

    #[test]
    fn mc_credit_is_independent_of_batch_split(seed in any::<u64>(), samples in 1usize..4) {
        let batch = rollout(EnvId::Chain4, 12, seed % 1000);
        let eval = Weighted { defaults: vec![vec![0.0]; 4] };
        let cfg = CreditConfig {
            spec: SpecId::Banzhaf,
            samples_per_agent: samples,
            evaluator: EvaluatorKind::ModelBased,
            gamma: 0.0,
            exact: false,
        };
        let whole = per_agent_advantages(&batch, &cfg, &eval, seed).unwrap();
        let mut head = batch.clone();
        head.states.truncate(5);
        head.next_states.truncate(5);
        head.obs.truncate(5);
        head.actions.truncate(5);
        head.raw_actions.truncate(5);
        head.log_probs.truncate(5);
        head.rewards.truncate(5);
        head.dones.truncate(5);
        head.terminals.truncate(5);
        let part = per_agent_advantages(&head, &cfg, &eval, seed).unwrap();
        prop_assert_eq!(&part.psi[..], &whole.psi[..5]);
    }

    #[test]
    fn ppo_ratio_is_one_at_the_behaviour_policy(seed in 0u64..500) {
        let batch = rollout(EnvId::Chain4, 40, seed);
        let spec = EnvId::Chain4.make().spec().clone();
        let policy = PolicySet::new(&spec, &ActorConfig::default(), &CriticConfig::default(), false, seed);
        for (i, actor) in policy.actors.iter().enumerate() {
            let obs = batch.agent_obs_matrix(i).unwrap();
            let raw = batch.agent_raw_action_matrix(i).unwrap();
            let old: Vec<f64> = batch.log_probs.iter().map(|lp| lp[i]).collect();
            let adv = vec![1.0; batch.len()];
            let (value, _) = clipped_objective(actor, &obs, &raw, &old, &adv, 0.2).unwrap();
            // Mean of ratio * advantage with unit advantages is the mean ratio.
            prop_assert!((value - 1.0).abs() <= 1e-12, "agent {i}: {value}");
        }
    }
}
