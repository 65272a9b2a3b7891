use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::tape::{relu, Tape, Var};
use super::tensor::{gemm, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => relu(v),
            Activation::Tanh => libm::tanh(v),
        }
    }

    fn record(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

/// Affine layer `x W + b` with `W: (in, out)` and `b: (1, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[input, output]),
            bias: Tensor::zeros(&[1, output]),
        }
    }

    /// Uniform in `±sqrt(1 / fan_in)` for weights and biases.
    pub fn uniform<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = libm::sqrt(1.0 / input.max(1) as f64);
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| rng.random_range(-bound..=bound))
                .collect()
        };
        let w = draw(input * output);
        let b = draw(output);
        Self {
            weight: Tensor::matrix(input, output, w).expect("sized above"),
            bias: Tensor::matrix(1, output, b).expect("sized above"),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }
}

/// Fully connected network with one hidden activation and one output activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
    hidden: Activation,
    output: Activation,
}

/// An [`Mlp`] whose parameters have been recorded as tape leaves.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    params: Vec<Var>,
    hidden: Activation,
    output: Activation,
}

impl Mlp {
    /// `sizes` lists every width from input to output, e.g. `[in, 32, 32, out]`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output widths");
        let layers = sizes
            .windows(2)
            .map(|w| Linear::uniform(w[0], w[1], rng))
            .collect();
        Self {
            layers,
            hidden,
            output,
        }
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output widths");
        let layers = sizes.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect();
        Self {
            layers,
            hidden,
            output,
        }
    }

    pub fn from_layers(layers: Vec<Linear>, hidden: Activation, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("an MLP needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::dim(
                    "Mlp layer chaining",
                    pair[0].output_dim(),
                    pair[1].input_dim(),
                ));
            }
        }
        for l in &layers {
            if l.bias.shape() != [1, l.output_dim()] {
                return Err(Error::dim("Mlp bias width", l.output_dim(), l.bias.cols()));
            }
        }
        Ok(Self {
            layers,
            hidden,
            output,
        })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(Linear::output_dim));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    /// Parameters in `[w0, b0, w1, b1, ...]` order.
    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn activation_for(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Forward pass without recording. `input` is `(batch, input_dim)`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (batch, width) = input.require_matrix("Mlp::forward input")?;
        if width != self.input_dim() {
            return Err(Error::dim("Mlp::forward input width", self.input_dim(), width));
        }
        let mut x = input.data().to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let (k, n) = (layer.input_dim(), layer.output_dim());
            let mut out = vec![0.0; batch * n];
            gemm(batch, k, n, &x, false, layer.weight.data(), false, &mut out, false);
            let act = self.activation_for(i);
            let b = layer.bias.data();
            for row in out.chunks_exact_mut(n) {
                for (o, bj) in row.iter_mut().zip(b) {
                    *o = act.apply(*o + bj);
                }
            }
            x = out;
        }
        Tensor::matrix(batch, self.output_dim(), x)
    }

    /// Convenience forward for a single input row.
    pub fn forward_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(&Tensor::row_vector(input))?.into_data())
    }

    /// Records the parameters on `tape` so the network can be differentiated.
    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        let params = self
            .layers
            .iter()
            .flat_map(|l| [l.weight.clone(), l.bias.clone()])
            .map(|t| tape.leaf(t))
            .collect();
        BoundMlp {
            params,
            hidden: self.hidden,
            output: self.output,
        }
    }
}

impl BoundMlp {
    /// Parameter handles in [`Mlp::params`] order.
    pub fn params(&self) -> &[Var] {
        &self.params
    }

    /// Recorded forward pass; values are bit-identical to [`Mlp::forward`].
    pub fn forward(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        let n_layers = self.params.len() / 2;
        let in_width = tape.value(self.params[0]).rows();
        let got = tape.value(input).cols();
        if got != in_width {
            return Err(Error::dim("Mlp::forward input width", in_width, got));
        }
        let mut x = input;
        for i in 0..n_layers {
            let (w, b) = (self.params[2 * i], self.params[2 * i + 1]);
            let z = tape.matmul(x, w)?;
            let z = tape.add_row(z, b)?;
            let act = if i + 1 == n_layers {
                self.output
            } else {
                self.hidden
            };
            x = act.record(tape, z);
        }
        Ok(x)
    }

    /// Collects gradients for every parameter, zeros where unreached.
    pub fn grads(&self, grads: &super::Gradients) -> Vec<Tensor> {
        self.params.iter().map(|&p| grads.wrt(p)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn zero_network_outputs_zero() {
        let mlp = Mlp::zeros(&[3, 8, 2], Activation::Tanh, Activation::Identity);
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]).unwrap();
        assert_eq!(mlp.forward(&x).unwrap(), Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let w = Tensor::matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let layer = Linear {
            weight: w,
            bias: Tensor::zeros(&[1, 3]),
        };
        let mlp = Mlp::from_layers(vec![layer], Activation::Relu, Activation::Identity).unwrap();
        assert_eq!(mlp.forward_one(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn input_width_is_checked() {
        let mlp = Mlp::zeros(&[3, 2], Activation::Tanh, Activation::Identity);
        let bad = Tensor::matrix(1, 2, vec![0.0; 2]).unwrap();
        assert!(matches!(mlp.forward(&bad), Err(Error::Dimension { .. })));
        let mut tape = Tape::new();
        let bound = mlp.bind(&mut tape);
        let x = tape.leaf(bad);
        assert!(bound.forward(&mut tape, x).is_err());
    }

    /// Straight-line reimplementation used as an oracle for the batched kernels.
    fn naive_forward(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in mlp.layers() {
            let (k, m) = (l.input_dim(), l.output_dim());
            let mut out = vec![0.0; m];
            for (j, o) in out.iter_mut().enumerate() {
                let mut s = l.bias.data()[j];
                for (i, hi) in h.iter().enumerate().take(k) {
                    s += hi * l.weight.data()[i * m + j];
                }
                // hidden and output layers are both tanh in this oracle
                *o = libm::tanh(s);
            }
            h = out;
        }
        h
    }

    #[test]
    fn tanh_net_matches_hand_rolled_oracle() {
        let mut rng = rng_for(42, &[]);
        let mlp = Mlp::new(&[4, 6, 3], Activation::Tanh, Activation::Tanh, &mut rng);
        let x = [0.3, -1.2, 0.7, 2.0];
        let got = mlp.forward_one(&x).unwrap();
        let want = naive_forward(&mlp, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn recorded_forward_is_bit_identical() {
        let mut rng = rng_for(5, &[]);
        let mlp = Mlp::new(&[5, 16, 16, 2], Activation::Relu, Activation::Identity, &mut rng);
        let x = Tensor::matrix(3, 5, (0..15).map(|i| i as f64 * 0.1 - 0.7).collect()).unwrap();
        let plain = mlp.forward(&x).unwrap();
        let mut tape = Tape::new();
        let bound = mlp.bind(&mut tape);
        let xv = tape.leaf(x);
        let y = bound.forward(&mut tape, xv).unwrap();
        assert_eq!(tape.value(y), &plain);
    }

    #[test]
    fn init_is_bounded_by_fan_in() {
        let mut rng = rng_for(1, &[]);
        let mlp = Mlp::new(&[16, 4], Activation::Tanh, Activation::Identity, &mut rng);
        let bound = 0.25;
        assert!(mlp.params().iter().all(|p| p.data().iter().all(|v| v.abs() <= bound)));
    }
}
