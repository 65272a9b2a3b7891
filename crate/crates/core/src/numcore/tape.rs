use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{gemm, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    BroadcastRows(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    SumCols(Var),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records primitive operations in evaluation order.
///
/// Nodes are appended after their parents, so walking the node list backwards
/// is a reverse topological order.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `var`; `None` if `var` does not reach the loss.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient w.r.t. `var`, zeros when unreached.
    pub fn wrt(&self, var: Var) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.0]),
        }
    }
}

fn same_shape(ctx: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Contract(format!(
            "{ctx}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn col_sums(g: &Tensor) -> Tensor {
    let (rows, cols) = (g.rows(), g.cols());
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        for (o, x) in out.iter_mut().zip(g.row(r)) {
            *o += x;
        }
    }
    Tensor::row_vector(&out)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// `(m, k) x (k, n) -> (m, n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).require_matrix("matmul lhs")?;
        let (k2, n) = self.value(b).require_matrix("matmul rhs")?;
        if k != k2 {
            return Err(Error::dim("matmul inner dimension", k, k2));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            false,
        );
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b)))
    }

    /// Adds a `(1, n)` row to every row of an `(m, n)` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (m, n) = self.value(x).require_matrix("add_row lhs")?;
        let (one, n2) = self.value(row).require_matrix("add_row row")?;
        if one != 1 || n != n2 {
            return Err(Error::dim("add_row width", n, n2));
        }
        let mut out = self.value(x).clone();
        let r = self.value(row).data();
        for i in 0..m {
            for (o, b) in out.data_mut()[i * n..(i + 1) * n].iter_mut().zip(r) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(x, row)))
    }

    /// Repeats a `(1, n)` row `rows` times.
    pub fn broadcast_rows(&mut self, row: Var, rows: usize) -> Result<Var> {
        let (one, n) = self.value(row).require_matrix("broadcast_rows")?;
        if one != 1 {
            return Err(Error::dim("broadcast_rows rows", 1, one));
        }
        let r = self.value(row).data();
        let mut data = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            data.extend_from_slice(r);
        }
        Ok(self.push(Tensor::matrix(rows, n, data)?, Op::BroadcastRows(row)))
    }

    fn binary(
        &mut self,
        ctx: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        same_shape(ctx, self.value(a), self.value(b))?;
        let out = self.value(a).zip(self.value(b), f);
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("min", a, b, |x, y| if x <= y { x } else { y }, Op::Min(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::Scale(x, c))
    }

    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v + c);
        self.push(out, Op::Offset(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(relu);
        self.push(out, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(libm::tanh);
        self.push(out, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(libm::exp);
        self.push(out, Op::Exp(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        self.push(out, Op::Square(x))
    }

    /// Clamps into `[lo, hi]`; gradient is zero outside the closed interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).map(|v| v.max(lo).min(hi));
        self.push(out, Op::Clamp(x, lo, hi))
    }

    /// `(m, n) -> (m, 1)` row sums.
    pub fn sum_cols(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.value(x).require_matrix("sum_cols")?;
        let d = self.value(x).data();
        let out: Vec<f64> = (0..m).map(|i| d[i * n..(i + 1) * n].iter().sum()).collect();
        Ok(self.push(Tensor::matrix(m, 1, out)?, Op::SumCols(x)))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s: f64 = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(loss_value.shape(), 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k) = (self.value(a).rows(), self.value(a).cols());
                    let n = self.value(b).cols();
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, self.value(b).data(), true, &mut da, false);
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, self.value(a).data(), true, g.data(), false, &mut db, false);
                    accumulate(&mut grads, a, Tensor::matrix(m, k, da)?);
                    accumulate(&mut grads, b, Tensor::matrix(k, n, db)?);
                }
                Op::AddRow(x, row) => {
                    accumulate(&mut grads, row, col_sums(&g));
                    accumulate(&mut grads, x, g.clone());
                }
                Op::BroadcastRows(row) => accumulate(&mut grads, row, col_sums(&g)),
                Op::Add(a, b) => {
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    accumulate(&mut grads, a, g.zip(self.value(b), |gv, bv| gv * bv));
                    accumulate(&mut grads, b, g.zip(self.value(a), |gv, av| gv * av));
                }
                Op::Min(a, b) => {
                    let (va, vb) = (self.value(a).data(), self.value(b).data());
                    let mut ga = g.clone();
                    let mut gb = g.clone();
                    for i in 0..g.len() {
                        if va[i] <= vb[i] {
                            gb.data_mut()[i] = 0.0;
                        } else {
                            ga.data_mut()[i] = 0.0;
                        }
                    }
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::Scale(x, c) => accumulate(&mut grads, x, g.map(|v| v * c)),
                Op::Offset(x) => accumulate(&mut grads, x, g.clone()),
                Op::Relu(x) => {
                    let dx = g.zip(&node.value, |gv, y| if y > 0.0 { gv } else { 0.0 });
                    accumulate(&mut grads, x, dx);
                }
                Op::Tanh(x) => {
                    let dx = g.zip(&node.value, |gv, y| gv * (1.0 - y * y));
                    accumulate(&mut grads, x, dx);
                }
                Op::Exp(x) => {
                    let dx = g.zip(&node.value, |gv, y| gv * y);
                    accumulate(&mut grads, x, dx);
                }
                Op::Square(x) => {
                    let dx = g.zip(self.value(x), |gv, xv| 2.0 * xv * gv);
                    accumulate(&mut grads, x, dx);
                }
                Op::Clamp(x, lo, hi) => {
                    let dx = g.zip(self.value(x), |gv, xv| {
                        if (lo..=hi).contains(&xv) {
                            gv
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, x, dx);
                }
                Op::SumCols(x) => {
                    let (m, n) = (self.value(x).rows(), self.value(x).cols());
                    let mut dx = Vec::with_capacity(m * n);
                    for &gv in g.data() {
                        dx.extend(core::iter::repeat_n(gv, n));
                    }
                    accumulate(&mut grads, x, Tensor::matrix(m, n, dx)?);
                }
                Op::Sum(x) => {
                    let dx = Tensor::filled(self.value(x).shape(), g.item());
                    accumulate(&mut grads, x, dx);
                }
                Op::Mean(x) => {
                    let t = self.value(x);
                    let dx = Tensor::filled(t.shape(), g.item() / t.len() as f64);
                    accumulate(&mut grads, x, dx);
                }
            }
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }
}

pub(crate) fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, g: Tensor) {
    match &mut grads[var.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
