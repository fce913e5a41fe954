//! Reverse-mode gradient tape over dense matrices.
//!
//! Nodes are appended in evaluation order, so the node index is already a
//! topological order; the backward pass walks it once in reverse.

use crate::error::{Error, Result};
use crate::quantile::pinball_subgradient;

use super::matrix::{relu, softmax_cols, Matrix};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddColumn(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    Relu(Var),
    SoftmaxCols(Var, Vec<bool>),
    MaskCols(Var, Vec<bool>),
    LayerNormCols { input: Var, inv_std: Vec<f64> },
    Sum(Var),
    AddAll(Vec<Var>),
    Pinball { pred: Var, target: Matrix, tau: f64 },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Record of primitive operations with the intermediates needed to replay
/// them backwards.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// `x + bias·1ᵀ` for a column vector `bias`.
    pub fn add_column(&mut self, x: Var, bias: Var) -> Result<Var> {
        let value = self.value(x).add_column(self.value(bias))?;
        Ok(self.push(value, Op::AddColumn(x, bias)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).scale(factor);
        self.push(value, Op::Scale(x, factor))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        self.push(value, Op::Transpose(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = relu(self.value(x));
        self.push(value, Op::Relu(x))
    }

    pub fn softmax_cols(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let value = softmax_cols(self.value(x), mask)?;
        Ok(self.push(value, Op::SoftmaxCols(x, mask.to_vec())))
    }

    pub fn mask_cols(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let value = self.value(x).mask_cols(mask)?;
        Ok(self.push(value, Op::MaskCols(x, mask.to_vec())))
    }

    /// Per-column standardisation `(z − mean) / sqrt(var + eps)`.
    pub fn layer_norm_cols(&mut self, x: Var, eps: f64) -> Var {
        let input = self.value(x);
        let (rows, cols) = input.shape();
        let mut out = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(cols);
        for c in 0..cols {
            let mut mean = 0.0;
            for r in 0..rows {
                mean += input.get(r, c);
            }
            mean /= rows as f64;
            let mut var = 0.0;
            for r in 0..rows {
                let d = input.get(r, c) - mean;
                var += d * d;
            }
            var /= rows as f64;
            let s = 1.0 / (var + eps).sqrt();
            for r in 0..rows {
                out.set(r, c, (input.get(r, c) - mean) * s);
            }
            inv_std.push(s);
        }
        self.push(out, Op::LayerNormCols { input: x, inv_std })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x))
    }

    /// Elementwise sum of equally shaped nodes, accumulated left to right.
    pub fn add_all(&mut self, xs: &[Var]) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::InvalidArgument("add_all of nothing".into()))?;
        let mut acc = self.value(*first).clone();
        for x in &xs[1..] {
            acc = acc.add(self.value(*x))?;
        }
        Ok(self.push(acc, Op::AddAll(xs.to_vec())))
    }

    /// Sum over entries of the pinball loss `ρ_τ(target − pred)`.
    pub fn pinball(&mut self, pred: Var, target: Matrix, tau: f64) -> Result<Var> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidTau(tau));
        }
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::Shape {
                op: "pinball",
                left: p.shape(),
                right: target.shape(),
            });
        }
        let mut total = 0.0;
        for (y, f) in target.data().iter().zip(p.data()) {
            let u = y - f;
            total += u * pinball_subgradient(u, tau);
        }
        Ok(self.push(Matrix::scalar(total), Op::Pinball { pred, target, tau }))
    }

    /// Back-propagates from the scalar node `loss`.
    ///
    /// Returns one entry per node; `None` marks nodes the loss does not
    /// depend on.
    pub fn backward(&self, loss: Var) -> Result<Vec<Option<Matrix>>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                left: self.value(loss).shape(),
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&self.value(*b).transpose())?;
                    let gb = self.value(*a).transpose().matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.scale(-1.0));
                }
                Op::AddColumn(x, bias) => {
                    let mut gb = Matrix::zeros(g.rows(), 1);
                    for r in 0..g.rows() {
                        gb.set(r, 0, g.row(r).iter().sum());
                    }
                    accumulate(&mut grads, *x, g.clone());
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Scale(x, factor) => accumulate(&mut grads, *x, g.scale(*factor)),
                Op::Transpose(x) => accumulate(&mut grads, *x, g.transpose()),
                Op::Relu(x) => {
                    let input = self.value(*x);
                    let gx = g.hadamard(&input.map(|v| if v > 0.0 { 1.0 } else { 0.0 }))?;
                    accumulate(&mut grads, *x, gx);
                }
                Op::SoftmaxCols(x, mask) => {
                    let y = &node.value;
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for c in 0..y.cols() {
                        let mut dot = 0.0;
                        for r in 0..y.rows() {
                            dot += y.get(r, c) * g.get(r, c);
                        }
                        for (r, &valid) in mask.iter().enumerate() {
                            if valid {
                                gx.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::MaskCols(x, mask) => accumulate(&mut grads, *x, g.mask_cols(mask)?),
                Op::LayerNormCols { input, inv_std } => {
                    let y = &node.value;
                    let rows = y.rows() as f64;
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for (c, s) in inv_std.iter().enumerate() {
                        let mut mean_g = 0.0;
                        let mut mean_gy = 0.0;
                        for r in 0..y.rows() {
                            mean_g += g.get(r, c);
                            mean_gy += g.get(r, c) * y.get(r, c);
                        }
                        mean_g /= rows;
                        mean_gy /= rows;
                        for r in 0..y.rows() {
                            gx.set(r, c, s * (g.get(r, c) - mean_g - y.get(r, c) * mean_gy));
                        }
                    }
                    accumulate(&mut grads, *input, gx);
                }
                Op::Sum(x) => {
                    let (r, c) = self.value(*x).shape();
                    accumulate(&mut grads, *x, Matrix::filled(r, c, g.item()));
                }
                Op::AddAll(xs) => {
                    for x in xs {
                        accumulate(&mut grads, *x, g.clone());
                    }
                }
                Op::Pinball { pred, target, tau } => {
                    let p = self.value(*pred);
                    let scale = g.item();
                    let mut gp = Matrix::zeros(p.rows(), p.cols());
                    for (i, (y, f)) in target.data().iter().zip(p.data()).enumerate() {
                        gp.data_mut()[i] = -scale * pinball_subgradient(y - f, *tau);
                    }
                    accumulate(&mut grads, *pred, gp);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(grads)
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Loss value and per-parameter gradients from one [`grad`] call.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub grads: Vec<Matrix>,
    /// Parameters the loss never touched; their gradient is reported as zero.
    pub unused: Vec<usize>,
}

impl Gradients {
    /// Fails with "unused parameter" if any parameter was off the tape.
    pub fn require_all_used(&self) -> Result<()> {
        match self.unused.first() {
            Some(&i) => Err(Error::UnusedParameter(i)),
            None => Ok(()),
        }
    }
}

/// Evaluates `f` on a fresh tape with every matrix of `params` recorded as a
/// leaf, then differentiates the returned scalar with respect to each one.
pub fn grad<F>(params: &[&Matrix], f: F) -> Result<Gradients>
where
    F: FnOnce(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf((*p).clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let value = tape.value(loss).clone();
    if value.shape() != (1, 1) {
        return Err(Error::Shape {
            op: "grad",
            left: value.shape(),
            right: (1, 1),
        });
    }
    let mut all = tape.backward(loss)?;
    let mut grads = Vec::with_capacity(vars.len());
    let mut unused = Vec::new();
    for (i, (v, p)) in vars.iter().zip(params).enumerate() {
        match all[v.0].take() {
            Some(g) => grads.push(g),
            None => {
                unused.push(i);
                grads.push(Matrix::zeros(p.rows(), p.cols()));
            }
        }
    }
    Ok(Gradients {
        loss: value.item(),
        grads,
        unused,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let a = Matrix::scalar(2.0);
        let b = Matrix::scalar(3.0);
        let g = grad(&[&a, &b], |t, v| {
            let p = t.matmul(v[0], v[1])?;
            Ok(t.sum(p))
        })
        .unwrap();
        assert_eq!(g.loss, 6.0);
        assert_eq!(g.grads[0].item(), 3.0);
        assert_eq!(g.grads[1].item(), 2.0);
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        let x = Matrix::scalar(-5.0);
        let c = Matrix::scalar(4.0);
        let g = grad(&[&x, &c], |t, v| {
            let r = t.relu(v[0]);
            t.matmul(r, v[1])
        })
        .unwrap();
        assert_eq!(g.grads[1].item(), 0.0);
        assert!(g.unused.is_empty());
    }

    #[test]
    fn unused_parameter_reported() {
        let a = Matrix::scalar(1.0);
        let b = Matrix::scalar(1.0);
        let g = grad(&[&a, &b], |t, v| Ok(t.sum(v[0]))).unwrap();
        assert_eq!(g.unused, vec![1]);
        assert_eq!(g.grads[1].item(), 0.0);
        assert_eq!(
            g.require_all_used().unwrap_err().to_string(),
            "unused parameter #1"
        );
    }

    #[test]
    fn pinball_kink_uses_tau() {
        let p = Matrix::scalar(1.0);
        let g = grad(&[&p], |t, v| t.pinball(v[0], Matrix::scalar(1.0), 0.3)).unwrap();
        assert_eq!(g.loss, 0.0);
        assert_eq!(g.grads[0].item(), -0.3);
    }

    #[test]
    fn backward_visits_shared_node_once() {
        // x used twice: d(x·x)/dx = 2x
        let x = Matrix::scalar(3.0);
        let g = grad(&[&x], |t, v| t.matmul(v[0], v[0])).unwrap();
        assert_eq!(g.grads[0].item(), 6.0);
    }
}
