use proptest::prelude::*;
use rand::Rng as _;
use semicredit_core::numcore::{Activation, Mlp, Tape, Tensor};
use semicredit_core::rng::rng_for;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = rng_for(seed, &[]);
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn mse_loss(mlp: &Mlp, x: &Tensor, y: &Tensor) -> f64 {
    let p = mlp.forward(x).unwrap();
    p.data().iter().zip(y.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64
}

/// Signs of every hidden pre-activation, computed without the tape.
fn relu_pattern(mlp: &Mlp, x: &Tensor) -> Vec<bool> {
    let mut h: Vec<Vec<f64>> = (0..x.rows()).map(|r| x.row(r).to_vec()).collect();
    let mut signs = Vec::new();
    let last = mlp.layers().len() - 1;
    for (l, layer) in mlp.layers().iter().enumerate() {
        let (n_in, n_out) = (layer.weight.rows(), layer.weight.cols());
        h = h
            .iter()
            .map(|row| {
                (0..n_out)
                    .map(|o| layer.bias.data()[o] + (0..n_in).map(|k| row[k] * layer.weight.data()[k * n_out + o]).sum::<f64>())
                    .collect()
            })
            .collect();
        if l < last {
            for row in &mut h {
                for v in row.iter_mut() {
                    signs.push(*v > 0.0);
                    *v = v.max(0.0);
                }
            }
        }
    }
    signs
}

/// Largest relative error between autodiff and central differences over the
/// sampled coordinates; coordinates whose perturbation flips a ReLU are skipped.
fn gradient_error(sizes: &[usize], hidden: Activation, output: Activation, seed: u64, coords: usize) -> f64 {
    let mut rng = rng_for(seed, &[1]);
    let mlp = Mlp::new(sizes, hidden, output, &mut rng);
    let x = random_matrix(5, sizes[0], seed ^ 0xa5);
    let y = random_matrix(5, *sizes.last().unwrap(), seed ^ 0x5a);

    let mut tape = Tape::new();
    let bound = mlp.bind(&mut tape);
    let xv = tape.leaf(x.clone());
    let yv = tape.leaf(y.clone());
    let p = bound.forward(&mut tape, xv).unwrap();
    let d = tape.sub(p, yv).unwrap();
    let sq = tape.square(d);
    let loss = tape.mean(sq);
    let grads = bound.grads(&tape.backward(loss).unwrap());

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let n_params = mlp.params().len();
    for _ in 0..coords {
        let pi = rng.random_range(0..n_params);
        let k = rng.random_range(0..mlp.params()[pi].len());
        let perturbed = |delta: f64| {
            let mut m = mlp.clone();
            m.params_mut()[pi].data_mut()[k] += delta;
            m
        };
        let (plus, minus) = (perturbed(h), perturbed(-h));
        if hidden == Activation::Relu && relu_pattern(&plus, &x) != relu_pattern(&minus, &x) {
            continue;
        }
        let fd = (mse_loss(&plus, &x, &y) - mse_loss(&minus, &x, &y)) / (2.0 * h);
        let ad = grads[pi].data()[k];
        worst = worst.max((ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-6));
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn relu_stacks_match_finite_differences(
        seed in any::<u64>(),
        widths in prop::collection::vec(2usize..24, 1..5),
        input in 1usize..10,
        output in 1usize..6,
    ) {
        let mut sizes = vec![input];
        sizes.extend(widths);
        sizes.push(output);
        let err = gradient_error(&sizes, Activation::Relu, Activation::Identity, seed, 24);
        prop_assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn tanh_stacks_match_finite_differences(
        seed in any::<u64>(),
        widths in prop::collection::vec(2usize..24, 1..4),
        input in 1usize..10,
        output in 1usize..6,
        tanh_out in any::<bool>(),
    ) {
        let mut sizes = vec![input];
        sizes.extend(widths);
        sizes.push(output);
        let out = if tanh_out { Activation::Tanh } else { Activation::Identity };
        let err = gradient_error(&sizes, Activation::Tanh, out, seed, 24);
        prop_assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn backward_is_linear_in_the_loss(seed in any::<u64>(), a in -4.0f64..4.0, b in -4.0f64..4.0) {
        let mlp = Mlp::new(&[3, 8, 8, 2], Activation::Tanh, Activation::Identity, &mut rng_for(seed, &[]));
        let x = random_matrix(4, 3, seed ^ 1);
        let grad_of = |ca: f64, cb: f64| {
            let mut tape = Tape::new();
            let bound = mlp.bind(&mut tape);
            let xv = tape.leaf(x.clone());
            let out = bound.forward(&mut tape, xv).unwrap();
            let l1 = {
                let s = tape.square(out);
                tape.mean(s)
            };
            let l2 = {
                let t = tape.tanh(out);
                tape.sum(t)
            };
            let s1 = tape.scale(l1, ca);
            let s2 = tape.scale(l2, cb);
            let total = tape.add(s1, s2).unwrap();
            bound.grads(&tape.backward(total).unwrap())
        };
        let (g1, g2, mix) = (grad_of(1.0, 0.0), grad_of(0.0, 1.0), grad_of(a, b));
        for ((m, x1), x2) in mix.iter().zip(&g1).zip(&g2) {
            for ((v, p), q) in m.data().iter().zip(x1.data()).zip(x2.data()) {
                prop_assert!((v - (a * p + b * q)).abs() <= 1e-12 * (1.0 + v.abs()));
            }
        }
    }

    #[test]
    fn forward_and_backward_are_bit_reproducible(seed in any::<u64>()) {
        let run = || {
            let mlp = Mlp::new(&[4, 16, 16, 1], Activation::Relu, Activation::Identity, &mut rng_for(seed, &[]));
            let x = random_matrix(6, 4, seed);
            let mut tape = Tape::new();
            let bound = mlp.bind(&mut tape);
            let xv = tape.leaf(x);
            let out = bound.forward(&mut tape, xv).unwrap();
            let loss = tape.mean(out);
            let g = bound.grads(&tape.backward(loss).unwrap());
            (tape.value(out).clone(), g)
        };
        prop_assert_eq!(run(), run());
    }
}
