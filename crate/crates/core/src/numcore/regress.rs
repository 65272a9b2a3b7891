use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Adam, Mlp, Tape, Tensor};
use crate::{Error, Result};

/// Shuffled minibatch index sets for one epoch. A dataset smaller than one
/// minibatch yields a single full-batch set.
pub fn minibatches<R: Rng + ?Sized>(len: usize, size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    idx.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Mean squared error of `mlp(inputs)` against `targets`, averaged over all elements.
pub fn mse(mlp: &Mlp, inputs: &Tensor, targets: &Tensor) -> Result<f64> {
    let pred = mlp.forward(inputs)?;
    if pred.shape() != targets.shape() {
        return Err(Error::dim("mse targets", pred.len(), targets.len()));
    }
    let n = pred.len().max(1) as f64;
    Ok(pred
        .data()
        .iter()
        .zip(targets.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// One Adam step on the MSE of a single minibatch; returns the loss before the step.
pub fn mse_step(mlp: &mut Mlp, adam: &mut Adam, inputs: &Tensor, targets: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = mlp.bind(&mut tape);
    let x = tape.leaf(inputs.clone());
    let y = tape.leaf(targets.clone());
    let pred = bound.forward(&mut tape, x)?;
    let err = tape.sub(pred, y)?;
    let sq = tape.square(err);
    let loss = tape.mean(sq);
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite(alloc::format!("regression loss is {value}")));
    }
    let grads = tape.backward(loss)?;
    let g = bound.grads(&grads);
    adam.step(&mut mlp.params_mut(), &g)?;
    Ok(value)
}

/// Minibatch MSE regression for `epochs` passes over the data. Returns the
/// row-weighted mean minibatch loss of each epoch.
pub fn fit_mse<R: Rng + ?Sized>(
    mlp: &mut Mlp,
    adam: &mut Adam,
    inputs: &Tensor,
    targets: &Tensor,
    epochs: usize,
    minibatch: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let rows = inputs.rows();
    if targets.rows() != rows {
        return Err(Error::dim("fit_mse target rows", rows, targets.rows()));
    }
    if rows == 0 {
        return Err(Error::contract("fit_mse needs at least one row"));
    }
    let mut trace = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let mut total = 0.0;
        for idx in minibatches(rows, minibatch, rng) {
            let loss = mse_step(mlp, adam, &inputs.gather_rows(&idx), &targets.gather_rows(&idx))?;
            total += loss * idx.len() as f64;
        }
        trace.push(total / rows as f64);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Activation, AdamConfig};
    use crate::rng::rng_for;
    use alloc::vec;

    #[test]
    fn minibatches_partition_the_indices() {
        let mut rng = rng_for(0, &[]);
        let sets = minibatches(10, 4, &mut rng);
        assert_eq!(sets.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 4, 2]);
        let mut all: Vec<usize> = sets.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(minibatches(3, 64, &mut rng).len(), 1);
    }

    #[test]
    fn regression_to_a_constant() {
        let mut rng = rng_for(3, &[]);
        let mut mlp = Mlp::new(&[2, 16, 1], Activation::Tanh, Activation::Identity, &mut rng);
        let mut adam = Adam::new(AdamConfig::with_lr(1e-2), &mlp.params());
        let x = Tensor::matrix(20, 2, (0..40).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let y = Tensor::filled(&[20, 1], 2.0);
        let trace = fit_mse(&mut mlp, &mut adam, &x, &y, 1000, 8, &mut rng).unwrap();
        assert!(trace.last().unwrap() < &1e-6, "{:?}", trace.last());
        assert!(mse(&mlp, &x, &y).unwrap() < 1e-6);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let mut rng = rng_for(4, &[]);
        let mut mlp = Mlp::new(&[2, 4, 1], Activation::Tanh, Activation::Identity, &mut rng);
        let before = mlp.clone();
        let mut adam = Adam::new(AdamConfig::default(), &mlp.params());
        let x = Tensor::zeros(&[3, 2]);
        let y = Tensor::zeros(&[3, 1]);
        assert!(fit_mse(&mut mlp, &mut adam, &x, &y, 0, 2, &mut rng).unwrap().is_empty());
        assert_eq!(mlp, before);
    }
}
