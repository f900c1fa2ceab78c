//! Reverse-mode automatic differentiation on a flat tape.
//!
//! A [`Tape`] records every operation of one forward computation; node ids
//! only ever reference earlier nodes, so reverse id order is a topological
//! order and [`Tape::backward`] is a single reverse sweep. Gradients
//! accumulate until [`Tape::zero_grads`, or the tape is dropped], which makes
//! repeated backward calls additive by design.
//!
//! All values are row-major `rows x cols` matrices; vectors are `1 x n`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;

use libm::{exp, log, tanh};

use crate::error::{CoreError, Result};

/// Handle to a tape node. Cheap to copy; only valid for the tape that
/// created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn numel(&self) -> usize {
        self.rows * self.cols
    }
}

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `a (n x k) @ b (k x m)`.
    MatMul { a: usize, b: usize, n: usize, k: usize, m: usize },
    /// Matrix plus a `1 x cols` row broadcast over every row.
    AddRow(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    /// The constant only affects the forward value, not the gradient.
    AddScalar(usize),
    Tanh(usize),
    Relu(usize),
    Sigmoid(usize),
    Exp(usize),
    Square(usize),
    /// Pass-through gradient inside the bounds, zero outside.
    Clamp(usize, f64, f64),
    /// Elementwise product with a constant tensor (masks, fixed noise).
    MulConst(usize, Box<[f64]>),
    Sum(usize),
    Mean(usize),
    /// `rows x cols -> rows x 1` row sums.
    SumRows(usize),
    /// Row-wise log(sum(exp(row))), `rows x cols -> rows x 1`.
    RowLogSumExp(usize),
    /// Row-wise x - logsumexp(x).
    LogSoftmax(usize),
    /// Column-wise concatenation of two matrices with equal row counts.
    ConcatCols(usize, usize),
}

struct TapeInner {
    ops: Vec<Op>,
    shapes: Vec<(usize, usize)>,
    values: Vec<Box<[f64]>>,
    grads: Vec<Box<[f64]>>,
}

/// Recording tape for one forward computation.
pub struct Tape {
    inner: RefCell<TapeInner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: RefCell::new(TapeInner {
                ops: Vec::new(),
                shapes: Vec::new(),
                values: Vec::new(),
                grads: Vec::new(),
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, op: Op, rows: usize, cols: usize, value: Vec<f64>) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        let mut inner = self.inner.borrow_mut();
        let id = inner.ops.len();
        inner.ops.push(op);
        inner.shapes.push((rows, cols));
        inner.grads.push(vec![0.0; value.len()].into_boxed_slice());
        inner.values.push(value.into_boxed_slice());
        Var { id, rows, cols }
    }

    /// Insert a leaf holding `data`. Leaves receive gradients but have no
    /// inputs; both parameters and constants are leaves.
    pub fn leaf(&self, data: &[f64], rows: usize, cols: usize) -> Var {
        assert_eq!(data.len(), rows * cols, "leaf buffer does not match shape");
        self.push(Op::Leaf, rows, cols, data.to_vec())
    }

    pub fn scalar(&self, value: f64) -> Var {
        self.push(Op::Leaf, 1, 1, vec![value])
    }

    /// Copy of a node's current value.
    pub fn value(&self, v: Var) -> Vec<f64> {
        self.inner.borrow().values[v.id].to_vec()
    }

    /// Value of a scalar node.
    pub fn value_scalar(&self, v: Var) -> f64 {
        assert_eq!(v.numel(), 1, "value_scalar on non-scalar");
        self.inner.borrow().values[v.id][0]
    }

    /// Copy of a node's accumulated gradient.
    pub fn grad(&self, v: Var) -> Vec<f64> {
        self.inner.borrow().grads[v.id].to_vec()
    }

    /// Reset every gradient buffer to zero.
    pub fn zero_grads(&self) {
        let mut inner = self.inner.borrow_mut();
        for g in inner.grads.iter_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    fn binary_same_shape(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: impl Fn(usize, usize) -> Op) -> Var {
        assert_eq!((a.rows, a.cols), (b.rows, b.cols), "shape mismatch in binary op");
        let value = {
            let inner = self.inner.borrow();
            let (va, vb) = (&inner.values[a.id], &inner.values[b.id]);
            va.iter().zip(vb.iter()).map(|(&x, &y)| f(x, y)).collect::<Vec<f64>>()
        };
        self.push(op(a.id, b.id), a.rows, a.cols, value)
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        self.binary_same_shape(a, b, |x, y| x * y, Op::Mul)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        assert_eq!(a.cols, b.rows, "inner dimensions differ in matmul");
        let (n, k, m) = (a.rows, a.cols, b.cols);
        let mut out = vec![0.0; n * m];
        {
            let inner = self.inner.borrow();
            crate::tensor::matmul(&inner.values[a.id], &inner.values[b.id], n, k, m, &mut out);
        }
        self.push(Op::MatMul { a: a.id, b: b.id, n, k, m }, n, m, out)
    }

    /// `a + row` where `row` is `1 x cols`, broadcast over the rows of `a`.
    pub fn add_row(&self, a: Var, row: Var) -> Var {
        assert_eq!(row.rows, 1, "broadcast operand must be a single row");
        assert_eq!(a.cols, row.cols, "row width mismatch in add_row");
        let value = {
            let inner = self.inner.borrow();
            let (va, vr) = (&inner.values[a.id], &inner.values[row.id]);
            let mut out = Vec::with_capacity(va.len());
            for r in 0..a.rows {
                for c in 0..a.cols {
                    out.push(va[r * a.cols + c] + vr[c]);
                }
            }
            out
        };
        self.push(Op::AddRow(a.id, row.id), a.rows, a.cols, value)
    }

    fn unary(&self, a: Var, f: impl Fn(f64) -> f64, op: impl Fn(usize) -> Op) -> Var {
        let value = {
            let inner = self.inner.borrow();
            inner.values[a.id].iter().map(|&x| f(x)).collect::<Vec<f64>>()
        };
        self.push(op(a.id), a.rows, a.cols, value)
    }

    pub fn neg(&self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg)
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, |id| Op::Scale(id, c))
    }

    pub fn add_scalar(&self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar)
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.unary(a, tanh, Op::Tanh)
    }

    pub fn relu(&self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu)
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(a, sigmoid_scalar, Op::Sigmoid)
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, exp, Op::Exp)
    }

    pub fn square(&self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square)
    }

    pub fn clamp(&self, a: Var, lo: f64, hi: f64) -> Var {
        assert!(lo < hi, "clamp bounds out of order");
        self.unary(a, |x| x.max(lo).min(hi), |id| Op::Clamp(id, lo, hi))
    }

    /// Elementwise product with a constant buffer of the same shape.
    pub fn mul_const(&self, a: Var, c: &[f64]) -> Var {
        assert_eq!(c.len(), a.numel(), "constant buffer shape mismatch");
        let value = {
            let inner = self.inner.borrow();
            inner.values[a.id].iter().zip(c).map(|(&x, &y)| x * y).collect::<Vec<f64>>()
        };
        self.push(Op::MulConst(a.id, c.to_vec().into_boxed_slice()), a.rows, a.cols, value)
    }

    pub fn sum(&self, a: Var) -> Var {
        let s: f64 = self.inner.borrow().values[a.id].iter().sum();
        self.push(Op::Sum(a.id), 1, 1, vec![s])
    }

    pub fn mean(&self, a: Var) -> Var {
        let inner_sum: f64 = self.inner.borrow().values[a.id].iter().sum();
        let n = a.numel().max(1) as f64;
        self.push(Op::Mean(a.id), 1, 1, vec![inner_sum / n])
    }

    pub fn sum_rows(&self, a: Var) -> Var {
        let value = {
            let inner = self.inner.borrow();
            let va = &inner.values[a.id];
            (0..a.rows)
                .map(|r| va[r * a.cols..(r + 1) * a.cols].iter().sum())
                .collect::<Vec<f64>>()
        };
        self.push(Op::SumRows(a.id), a.rows, 1, value)
    }

    pub fn row_logsumexp(&self, a: Var) -> Var {
        let value = {
            let inner = self.inner.borrow();
            let va = &inner.values[a.id];
            (0..a.rows)
                .map(|r| row_lse(&va[r * a.cols..(r + 1) * a.cols]))
                .collect::<Vec<f64>>()
        };
        self.push(Op::RowLogSumExp(a.id), a.rows, 1, value)
    }

    pub fn log_softmax(&self, a: Var) -> Var {
        let value = {
            let inner = self.inner.borrow();
            let va = &inner.values[a.id];
            let mut out = Vec::with_capacity(va.len());
            for r in 0..a.rows {
                let row = &va[r * a.cols..(r + 1) * a.cols];
                let lse = row_lse(row);
                out.extend(row.iter().map(|&x| x - lse));
            }
            out
        };
        self.push(Op::LogSoftmax(a.id), a.rows, a.cols, value)
    }

    pub fn concat_cols(&self, a: Var, b: Var) -> Var {
        assert_eq!(a.rows, b.rows, "row count mismatch in concat");
        let value = {
            let inner = self.inner.borrow();
            let (va, vb) = (&inner.values[a.id], &inner.values[b.id]);
            let mut out = Vec::with_capacity(va.len() + vb.len());
            for r in 0..a.rows {
                out.extend_from_slice(&va[r * a.cols..(r + 1) * a.cols]);
                out.extend_from_slice(&vb[r * b.cols..(r + 1) * b.cols]);
            }
            out
        };
        self.push(Op::ConcatCols(a.id, b.id), a.rows, a.cols + b.cols, value)
    }

    /// Reverse sweep from a scalar `loss`; every node's gradient receives
    /// its share of d(loss)/d(node), added to whatever was already there.
    pub fn backward(&self, loss: Var) -> Result<()> {
        let mut inner = self.inner.borrow_mut();
        if loss.id >= inner.ops.len() {
            return Err(CoreError::InvalidTape("node does not belong to this tape"));
        }
        if loss.numel() != 1 {
            return Err(CoreError::InvalidTape("loss must be a scalar"));
        }
        if !inner.values[loss.id][0].is_finite() {
            return Err(CoreError::InvalidTape("loss is not finite"));
        }

        let TapeInner { ops, shapes, values, grads } = &mut *inner;
        // Seed in a scratch buffer so pre-existing gradient content is kept.
        let mut seed = vec![0.0; 1].into_boxed_slice();
        seed[0] = 1.0;
        let mut pending: Vec<Box<[f64]>> = vec![Box::default(); ops.len()];
        pending[loss.id] = seed;

        for i in (0..=loss.id).rev() {
            let g = core::mem::take(&mut pending[i]);
            if g.is_empty() {
                continue;
            }
            // Fold this node's upstream gradient into its persistent slot.
            for (acc, &gi) in grads[i].iter_mut().zip(g.iter()) {
                *acc += gi;
            }
            let (rows, cols) = shapes[i];
            match &ops[i] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    add_into(&mut pending[*a], &g);
                    add_into(&mut pending[*b], &g);
                }
                Op::Sub(a, b) => {
                    add_into(&mut pending[*a], &g);
                    sub_into(&mut pending[*b], &g);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    mul_add_into(&mut pending, a, &g, &values[b]);
                    mul_add_into(&mut pending, b, &g, &values[a]);
                }
                Op::MatMul { a, b, n, k, m } => {
                    let (a, b, n, k, m) = (*a, *b, *n, *k, *m);
                    // dA += G @ B^T
                    ensure(&mut pending[a], n * k);
                    matmul_nt(&g, &values[b], n, m, k, &mut pending[a]);
                    // dB += A^T @ G
                    ensure(&mut pending[b], k * m);
                    matmul_tn(&values[a], &g, n, k, m, &mut pending[b]);
                }
                Op::AddRow(a, row) => {
                    add_into(&mut pending[*a], &g);
                    let dst = &mut pending[*row];
                    ensure(dst, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            dst[c] += g[r * cols + c];
                        }
                    }
                }
                Op::Neg(a) => sub_into(&mut pending[*a], &g),
                Op::Scale(a, c) => {
                    let dst = &mut pending[*a];
                    ensure(dst, g.len());
                    for (d, &gi) in dst.iter_mut().zip(g.iter()) {
                        *d += c * gi;
                    }
                }
                Op::AddScalar(a) => add_into(&mut pending[*a], &g),
                Op::Tanh(a) => {
                    let a = *a;
                    chain_from_output(&mut pending, a, &g, &values[i], |y| 1.0 - y * y);
                }
                Op::Relu(a) => {
                    let a = *a;
                    chain_from_input(&mut pending, a, &g, values, |x| if x > 0.0 { 1.0 } else { 0.0 });
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    chain_from_output(&mut pending, a, &g, &values[i], |y| y * (1.0 - y));
                }
                Op::Exp(a) => {
                    let a = *a;
                    chain_from_output(&mut pending, a, &g, &values[i], |y| y);
                }
                Op::Square(a) => {
                    let a = *a;
                    chain_from_input(&mut pending, a, &g, values, |x| 2.0 * x);
                }
                Op::Clamp(a, lo, hi) => {
                    let (a, lo, hi) = (*a, *lo, *hi);
                    chain_from_input(&mut pending, a, &g, values, |x| {
                        if x >= lo && x <= hi {
                            1.0
                        } else {
                            0.0
                        }
                    });
                }
                Op::MulConst(a, c) => {
                    let dst = &mut pending[*a];
                    ensure(dst, g.len());
                    for ((d, &gi), &ci) in dst.iter_mut().zip(g.iter()).zip(c.iter()) {
                        *d += gi * ci;
                    }
                }
                Op::Sum(a) => {
                    let dst = &mut pending[*a];
                    let n = values[*a].len();
                    ensure(dst, n);
                    for d in dst.iter_mut() {
                        *d += g[0];
                    }
                }
                Op::Mean(a) => {
                    let n = values[*a].len();
                    let w = g[0] / n.max(1) as f64;
                    let dst = &mut pending[*a];
                    ensure(dst, n);
                    for d in dst.iter_mut() {
                        *d += w;
                    }
                }
                Op::SumRows(a) => {
                    let a = *a;
                    let in_cols = values[a].len() / rows.max(1);
                    let dst = &mut pending[a];
                    ensure(dst, rows * in_cols);
                    for r in 0..rows {
                        for c in 0..in_cols {
                            dst[r * in_cols + c] += g[r];
                        }
                    }
                }
                Op::RowLogSumExp(a) => {
                    let a = *a;
                    let in_cols = values[a].len() / rows.max(1);
                    let out = &values[i];
                    // d lse / dx_j = softmax(x)_j = exp(x_j - lse)
                    let x = &values[a];
                    let dst = &mut pending[a];
                    ensure(dst, rows * in_cols);
                    for r in 0..rows {
                        for c in 0..in_cols {
                            dst[r * in_cols + c] += g[r] * exp(x[r * in_cols + c] - out[r]);
                        }
                    }
                }
                Op::LogSoftmax(a) => {
                    let a = *a;
                    let y = &values[i];
                    let dst = &mut pending[a];
                    ensure(dst, rows * cols);
                    for r in 0..rows {
                        let gr = &g[r * cols..(r + 1) * cols];
                        let yr = &y[r * cols..(r + 1) * cols];
                        let gsum: f64 = gr.iter().sum();
                        let d = &mut dst[r * cols..(r + 1) * cols];
                        for c in 0..cols {
                            d[c] += gr[c] - exp(yr[c]) * gsum;
                        }
                    }
                }
                Op::ConcatCols(a, b) => {
                    let (a, b) = (*a, *b);
                    let ca = values[a].len() / rows.max(1);
                    let cb = values[b].len() / rows.max(1);
                    {
                        let dst = &mut pending[a];
                        ensure(dst, rows * ca);
                        for r in 0..rows {
                            for c in 0..ca {
                                dst[r * ca + c] += g[r * cols + c];
                            }
                        }
                    }
                    {
                        let dst = &mut pending[b];
                        ensure(dst, rows * cb);
                        for r in 0..rows {
                            for c in 0..cb {
                                dst[r * cb + c] += g[r * cols + ca + c];
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

#[inline]
fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

fn row_lse(row: &[f64]) -> f64 {
    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    let s: f64 = row.iter().map(|&x| exp(x - mx)).sum();
    mx + log(s)
}

/// Allocate a zeroed pending-gradient buffer on first touch.
fn ensure(buf: &mut Box<[f64]>, n: usize) {
    if buf.is_empty() {
        *buf = vec![0.0; n].into_boxed_slice();
    }
}

fn add_into(dst: &mut Box<[f64]>, g: &[f64]) {
    ensure(dst, g.len());
    for (d, &gi) in dst.iter_mut().zip(g) {
        *d += gi;
    }
}

fn sub_into(dst: &mut Box<[f64]>, g: &[f64]) {
    ensure(dst, g.len());
    for (d, &gi) in dst.iter_mut().zip(g) {
        *d -= gi;
    }
}

fn mul_add_into(pending: &mut [Box<[f64]>], target: usize, g: &[f64], other: &[f64]) {
    let dst = &mut pending[target];
    ensure(dst, g.len());
    for ((d, &gi), &oi) in dst.iter_mut().zip(g).zip(other) {
        *d += gi * oi;
    }
}

fn chain_from_output(
    pending: &mut [Box<[f64]>],
    target: usize,
    g: &[f64],
    out: &[f64],
    dydout: impl Fn(f64) -> f64,
) {
    let dst = &mut pending[target];
    ensure(dst, g.len());
    for ((d, &gi), &yi) in dst.iter_mut().zip(g).zip(out) {
        *d += gi * dydout(yi);
    }
}

fn chain_from_input(
    pending: &mut [Box<[f64]>],
    target: usize,
    g: &[f64],
    values: &[Box<[f64]>],
    dydx: impl Fn(f64) -> f64,
) {
    let x: &[f64] = &values[target];
    let dst = &mut pending[target];
    ensure(dst, g.len());
    for ((d, &gi), &xi) in dst.iter_mut().zip(g).zip(x.iter()) {
        *d += gi * dydx(xi);
    }
}

/// `out += a (n x m) @ b^T (b is k x m)`, result `n x k`.
fn matmul_nt(a: &[f64], b: &[f64], n: usize, m: usize, k: usize, out: &mut [f64]) {
    for i in 0..n {
        let arow = &a[i * m..(i + 1) * m];
        let orow = &mut out[i * k..(i + 1) * k];
        for p in 0..k {
            let brow = &b[p * m..(p + 1) * m];
            let mut acc = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            orow[p] += acc;
        }
    }
}

/// `out += a^T @ b` where `a` is `n x k` and `b` is `n x m`, result `k x m`.
fn matmul_tn(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::vec::Vec;

    #[test]
    fn quadratic_loss_gradient() {
        // loss = sum(w * w), w = [1, 2, 3] -> grad = [2, 4, 6]
        let tape = Tape::new();
        let w = tape.leaf(&[1.0, 2.0, 3.0], 1, 3);
        let loss = tape.sum(tape.mul(w, w));
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w), alloc::vec![2.0, 4.0, 6.0]);
    }

    #[test]
    fn disconnected_leaf_gets_zero_grad() {
        let tape = Tape::new();
        let w = tape.leaf(&[1.0, 2.0], 1, 2);
        let p = tape.leaf(&[5.0], 1, 1);
        let loss = tape.sum(tape.square(w));
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(p), alloc::vec![0.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let tape = Tape::new();
        let w = tape.leaf(&[3.0], 1, 1);
        let loss = tape.square(w);
        tape.backward(loss).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w), alloc::vec![12.0]);
        tape.zero_grads();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w), alloc::vec![6.0]);
    }

    #[test]
    fn non_scalar_loss_is_invalid_tape() {
        let tape = Tape::new();
        let w = tape.leaf(&[1.0, 2.0], 1, 2);
        assert_eq!(
            tape.backward(w),
            Err(CoreError::InvalidTape("loss must be a scalar"))
        );
    }

    #[test]
    fn foreign_var_is_invalid_tape() {
        let tape = Tape::new();
        let other = Tape::new();
        let w = other.leaf(&[1.0], 1, 1);
        assert!(matches!(tape.backward(w), Err(CoreError::InvalidTape(_))));
    }

    /// Central finite differences of a scalar-valued tape program.
    fn numeric_grad(
        build: &dyn Fn(&Tape, &[f64]) -> Var,
        x: &[f64],
        step: f64,
    ) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += step;
            xm[i] -= step;
            let tp = Tape::new();
            let fp = tp.value_scalar(build(&tp, &xp));
            let tm = Tape::new();
            let fm = tm.value_scalar(build(&tm, &xm));
            out.push((fp - fm) / (2.0 * step));
        }
        out
    }

    fn grad_check(build: &dyn Fn(&Tape, &[f64]) -> Var, x: &[f64]) {
        let tape = Tape::new();
        // Leaf 0 is always the differentiated input by convention here.
        let loss = build(&tape, x);
        tape.backward(loss).unwrap();
        let analytic = {
            let v = Var { id: 0, rows: 1, cols: x.len() };
            tape.grad(v)
        };
        let numeric = numeric_grad(build, x, 1e-5);
        for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
            let tol = 1e-4 * a.abs().max(n.abs()).max(1.0);
            assert!(
                (a - n).abs() <= tol,
                "grad mismatch at {i}: analytic {a} numeric {n}"
            );
        }
    }

    /// Every differentiable op, checked against central differences on
    /// random inputs over many trials.
    #[test]
    fn finite_difference_check_all_ops() {
        let mut rng = Rng::new(2024);
        for trial in 0..60 {
            let n = 4 + (trial % 3);
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    // Keep away from relu/clamp kinks.
                    let v = rng.uniform_range(0.15, 1.5);
                    if rng.uniform() < 0.5 {
                        -v
                    } else {
                        v
                    }
                })
                .collect();
            let consts: Vec<f64> = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let k = consts.clone();

            let builders: Vec<(&str, Box<dyn Fn(&Tape, &[f64]) -> Var>)> = alloc::vec![
                ("add", Box::new(move |t: &Tape, x: &[f64]| {
                    let v = t.leaf(x, 1, x.len());
                    let w = t.leaf(&alloc::vec![0.3; x.len()], 1, x.len());
                    t.sum(t.square(t.add(v, w)))
                }) as Box<dyn Fn(&Tape, &[f64]) -> Var>),
                ("sub", Box::new(move |t: &Tape, x: &[f64]| {
                    let v = t.leaf(x, 1, x.len());
                    let w = t.leaf(&alloc::vec![0.7; x.len()], 1, x.len());
                    t.sum(t.square(t.sub(v, w)))
                })),
                ("mul", Box::new({
                    let k = k.clone();
                    move |t: &Tape, x: &[f64]| {
                        let v = t.leaf(x, 1, x.len());
                        let w = t.leaf(&k[..x.len()], 1, x.len());
                        t.sum(t.mul(v, w))
                    }
                })),
                ("tanh", Box::new(|t: &Tape, x: &[f64]| {
                    let v = t.leaf(x, 1, x.len());
                    t.sum(t.tanh(v))
                })),
                ("relu", Box::new(|t: &Tape, x: &[f64]| {
                    let v = t.leaf(x, 1, x.len());
                    t.sum(t.relu(v))
                })),
                ("sigmoid", Box::new(|t: &Tape, x: &[f64]| {
                    let v = t.leaf(x, 1, x.len());
                    t.sum(t.sigmoid(v))
                })),
                ("exp", Box::new(|t: &Tape, x: &[f64]| {
                    let v = t.leaf(x, 1, x.len());
                    t.sum(t.exp(v))
                })),
                ("square", Box::new(|t: &Tape, x: &[f64]| {
                    let v = t.leaf(x, 1, x.len());
                    t.sum(t.square(v))
                })),
                ("neg_scale_addscalar", Box::new(|t: &Tape, x: &[f64]| {
                    let v = t.leaf(x, 1, x.len());
                    t.sum(t.add_scalar(t.scale(t.neg(v), 1.7), 0.3))
                })),
                ("clamp", Box::new(|t: &Tape, x: &[f64]| {
                    let v = t.leaf(x, 1, x.len());
                    t.sum(t.square(t.clamp(v, -1.2, 1.2)))
                })),
                ("mean", Box::new(|t: &Tape, x: &[f64]| {
                    let v = t.leaf(x, 1, x.len());
                    t.mean(t.square(v))
                })),
                ("matmul", Box::new({
                    let k = k.clone();
                    move |t: &Tape, x: &[f64]| {
                        // x as 2 x (n/2) times a constant (n/2) x 2
                        let cols = x.len() / 2;
                        let v = t.leaf(x, 2, cols);
                        let w = t.leaf(&k[..cols * 2], cols, 2);
                        t.sum(t.square(t.matmul(v, w)))
                    }
                })),
                ("add_row", Box::new(|t: &Tape, x: &[f64]| {
                    let cols = x.len() / 2;
                    let v = t.leaf(x, 2, cols);
                    let row = t.leaf(&alloc::vec![0.25; cols], 1, cols);
                    t.sum(t.square(t.add_row(v, row)))
                })),
                ("mul_const", Box::new({
                    let k = k.clone();
                    move |t: &Tape, x: &[f64]| {
                        let v = t.leaf(x, 1, x.len());
                        t.sum(t.mul_const(v, &k[..x.len()]))
                    }
                })),
                ("sum_rows", Box::new(|t: &Tape, x: &[f64]| {
                    let cols = x.len() / 2;
                    let v = t.leaf(x, 2, cols);
                    t.sum(t.square(t.sum_rows(v)))
                })),
                ("row_logsumexp", Box::new(|t: &Tape, x: &[f64]| {
                    let cols = x.len() / 2;
                    let v = t.leaf(x, 2, cols);
                    t.sum(t.row_logsumexp(v))
                })),
                ("log_softmax", Box::new(|t: &Tape, x: &[f64]| {
                    let cols = x.len() / 2;
                    let v = t.leaf(x, 2, cols);
                    t.sum(t.square(t.log_softmax(v)))
                })),
                ("concat", Box::new(|t: &Tape, x: &[f64]| {
                    let cols = x.len() / 2;
                    let v = t.leaf(x, 1, x.len());
                    let parts = t.leaf(&alloc::vec![0.4; cols], 1, cols);
                    t.sum(t.square(t.concat_cols(v, parts)))
                })),
            ];

            for (name, b) in &builders {
                // matmul-family builders need an even element count.
                if x.len() % 2 != 0
                    && matches!(
                        *name,
                        "matmul" | "add_row" | "sum_rows" | "row_logsumexp" | "log_softmax" | "concat"
                    )
                {
                    continue;
                }
                grad_check(b.as_ref(), &x);
            }
        }
    }

    #[test]
    fn matmul_grad_matches_hand_derivation() {
        // f(X) = sum(X @ W): dX = ones @ W^T
        let tape = Tape::new();
        let x = tape.leaf(&[1.0, 2.0, 3.0, 4.0], 2, 2);
        let w = tape.leaf(&[0.5, 0.3, 0.7, 0.1], 2, 2);
        let loss = tape.sum(tape.matmul(x, w));
        tape.backward(loss).unwrap();
        let gx = tape.grad(x);
        for r in 0..2 {
            assert!((gx[r * 2] - 0.8).abs() < 1e-12);
            assert!((gx[r * 2 + 1] - 0.8).abs() < 1e-12);
        }
    }
}
