use proptest::prelude::*;
use semicredit_core::coopgame::{
    marginal_contribution, semivalue_mc_estimate, semivalues_exact, Coalition, SemivalueSpec, TableGame,
};
use semicredit_core::rng::rng_for;

fn specs(n: usize) -> Vec<SemivalueSpec> {
    let mut out = vec![
        SemivalueSpec::shapley(n).unwrap(),
        SemivalueSpec::banzhaf(n).unwrap(),
        SemivalueSpec::leave_one_out(n).unwrap(),
    ];
    out.extend((0..n).map(|c| SemivalueSpec::fixed_size(n, c).unwrap()));
    out
}

/// A game on `n` agents with values drawn from `raw` (cycled).
fn game(n: usize, raw: &[f64]) -> TableGame {
    TableGame::new(n, (0..1usize << n).map(|m| raw[m % raw.len()]).collect()).unwrap()
}

fn game_strategy() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (2usize..=7).prop_flat_map(|n| (Just(n), prop::collection::vec(-1.0f64..1.0, 1 << n)))
}

fn swap(c: Coalition, i: usize, j: usize) -> Coalition {
    let (a, b) = (c.contains(i), c.contains(j));
    let mut out = c.without(i).without(j);
    if a {
        out = out.with(j);
    }
    if b {
        out = out.with(i);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn size_weights_are_distributions(n in 1usize..=40) {
        for spec in specs(n) {
            prop_assert!(spec.weights().iter().all(|&p| p >= 0.0));
            prop_assert!((spec.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn random_distributions_are_accepted(raw in prop::collection::vec(0.0f64..1.0, 1..12)) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let spec = SemivalueSpec::new(p).unwrap();
        prop_assert!((spec.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn shapley_is_efficient((n, raw) in game_strategy()) {
        let g = game(n, &raw);
        let psi = semivalues_exact(&g, &SemivalueSpec::shapley(n).unwrap()).unwrap();
        let full = g.table()[(1 << n) - 1] - g.table()[0];
        prop_assert!((psi.iter().sum::<f64>() - full).abs() <= 1e-9);
    }

    #[test]
    fn dummy_agents_get_exactly_zero((n, raw) in game_strategy(), d in 0usize..7) {
        let d = d % n;
        let g = TableGame::from_fn(n, |c| raw[c.without(d).mask() as usize]).unwrap();
        for spec in specs(n) {
            prop_assert_eq!(semivalues_exact(&g, &spec).unwrap()[d], 0.0);
        }
    }

    #[test]
    fn interchangeable_agents_are_paid_equally((n, raw) in game_strategy(), i in 0usize..7, j in 0usize..7) {
        let (i, j) = (i % n, j % n);
        prop_assume!(i != j);
        let base = game(n, &raw);
        let t = base.table();
        let g = TableGame::from_fn(n, |c| t[c.mask() as usize] + t[swap(c, i, j).mask() as usize]).unwrap();
        for spec in specs(n) {
            let psi = semivalues_exact(&g, &spec).unwrap();
            prop_assert!((psi[i] - psi[j]).abs() <= 1e-12, "{:?}", psi);
        }
    }

    #[test]
    fn semivalues_are_linear((n, raw) in game_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let v1 = game(n, &raw);
        let rev: Vec<f64> = raw.iter().rev().map(|x| x * x).collect();
        let v2 = game(n, &rev);
        let mix = TableGame::new(n, v1.table().iter().zip(v2.table()).map(|(x, y)| a * x + b * y).collect()).unwrap();
        for spec in specs(n) {
            let (p1, p2) = (semivalues_exact(&v1, &spec).unwrap(), semivalues_exact(&v2, &spec).unwrap());
            for (i, m) in semivalues_exact(&mix, &spec).unwrap().iter().enumerate() {
                prop_assert!((m - (a * p1[i] + b * p2[i])).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn constant_shift_changes_nothing((n, raw) in game_strategy(), shift in -100.0f64..100.0) {
        let g = game(n, &raw);
        let shifted = TableGame::new(n, g.table().iter().map(|v| v + shift).collect()).unwrap();
        for m in 0..(1u64 << n) {
            let c = Coalition::from_mask(n, m).unwrap();
            for i in (0..n).filter(|&i| !c.contains(i)) {
                let d = marginal_contribution(i, c, &g).unwrap() - marginal_contribution(i, c, &shifted).unwrap();
                prop_assert!(d.abs() <= 1e-12);
            }
        }
        for spec in specs(n) {
            let (p, q) = (semivalues_exact(&g, &spec).unwrap(), semivalues_exact(&shifted, &spec).unwrap());
            for (x, y) in p.iter().zip(&q) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn averaged_monte_carlo_estimates_converge_to_the_exact_value() {
    let n = 5;
    let raw: Vec<f64> = (0..32).map(|k| ((k * 37 % 29) as f64 / 29.0).sin()).collect();
    let g = game(n, &raw);
    for spec in [SemivalueSpec::shapley(n).unwrap(), SemivalueSpec::banzhaf(n).unwrap()] {
        let exact = semivalues_exact(&g, &spec).unwrap();
        for (i, &truth) in exact.iter().enumerate() {
            let runs: Vec<f64> = (0..200)
                .map(|r| {
                    let mut rng = rng_for(11, &[i as u64, r]);
                    semivalue_mc_estimate(i, &g, &spec, 50, &mut rng).unwrap().mean
                })
                .collect();
            let mean = runs.iter().sum::<f64>() / runs.len() as f64;
            let var = runs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs.len() - 1) as f64;
            let se = (var / runs.len() as f64).sqrt();
            assert!((mean - truth).abs() <= 3.0 * se + 1e-12, "agent {i}: {mean} vs {truth} (se {se})");
        }
    }
}
