//! Reverse-mode automatic differentiation over [`Tensor2`] values.
//!
//! A [`Graph`] records every operation in execution order, so node indices
//! are already a topological order and [`Graph::backward`] is a single
//! reverse sweep. Parameters can be borrowed into the graph without copying.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::tensor::{self, Tensor2};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Hadamard(Var, Var),
    Sigmoid(Var),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Tensor2<T>,
        rstd: Vec<T>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    GatherRows {
        table: Var,
        idx: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        probs: Tensor2<T>,
        targets: Vec<usize>,
        mask: Vec<bool>,
        count: usize,
    },
    FrobeniusSq(Var),
    Sum(Var),
}

struct Node<'a, T: Scalar> {
    value: Cow<'a, Tensor2<T>>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Scalar> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor2<T>>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, name: &str, value: Tensor2<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        let value = value.check_finite(name)?;
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        Ok(self.push(Cow::Owned(value), op, needs_grad))
    }

    /// Trainable leaf that owns its value.
    pub fn param(&mut self, value: Tensor2<T>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, true)
    }

    /// Trainable leaf borrowing its value (no copy).
    pub fn param_ref(&mut self, value: &'a Tensor2<T>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor2<T>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor2<T>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor2<T> {
        &self.nodes[v.0].value
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            Ok(())
        } else {
            Err(Error::shape(op, format!("{sa:?} vs {sb:?}")))
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        self.push_op("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul_nt(self.value(a), self.value(b))?;
        self.push_op("matmul_nt", out, Op::MatMulNt(a, b), &[a, b])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).transpose();
        self.push_op("transpose", out, Op::Transpose(x), &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push_op("add", out, Op::Add(a, b), &[a, b])
    }

    /// Adds a `[1×d]` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.rows() != 1 || rv.cols() != xv.cols() {
            return Err(Error::shape(
                "add_row",
                format!("{:?} row against {:?}", rv.shape(), xv.shape()),
            ));
        }
        let mut out = xv.clone();
        let r = rv.row(0);
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(r) {
                *o = *o + b;
            }
        }
        self.push_op("add_row", out, Op::AddRow(x, row), &[x, row])
    }

    pub fn scale(&mut self, x: Var, s: T) -> Result<Var> {
        let out = self.value(x).map(|v| v * s);
        self.push_op("scale", out, Op::Scale(x, s), &[x])
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push_op("hadamard", out, Op::Hadamard(a, b), &[a, b])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(tensor::sigmoid_scalar);
        self.push_op("sigmoid", out, Op::Sigmoid(x), &[x])
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).map(tensor::gelu_scalar);
        self.push_op("gelu", out, Op::Gelu(x), &[x])
    }

    /// Row-wise softmax over all columns.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.softmax_inner(x, false)
    }

    /// Row-wise softmax where row `i` sees only columns `0..=i`.
    pub fn softmax_rows_causal(&mut self, x: Var) -> Result<Var> {
        self.softmax_inner(x, true)
    }

    fn softmax_inner(&mut self, x: Var, causal: bool) -> Result<Var> {
        if !self.value(x).is_finite() {
            return Err(Error::non_finite("softmax_rows input"));
        }
        let out = tensor::softmax_rows(self.value(x), causal);
        self.push_op("softmax_rows", out, Op::Softmax(x), &[x])
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let (n, d) = xv.shape();
        for (name, p) in [("gain", gain), ("bias", bias)] {
            if self.value(p).shape() != (1, d) {
                return Err(Error::shape(
                    "layer_norm",
                    format!("{name} {:?} for width {d}", self.value(p).shape()),
                ));
            }
        }
        let inv_d: T = c(1.0 / d as f64);
        let eps: T = c(eps);
        let mut xhat = Tensor2::zeros(n, d);
        let mut rstd = Vec::with_capacity(n);
        for r in 0..n {
            let row = xv.row(r);
            let mean = row.iter().fold(T::zero(), |a, &v| a + v) * inv_d;
            let var = row
                .iter()
                .fold(T::zero(), |a, &v| a + (v - mean) * (v - mean))
                * inv_d;
            let rs = T::one() / (var + eps).sqrt();
            for (h, &v) in xhat.row_mut(r).iter_mut().zip(row) {
                *h = (v - mean) * rs;
            }
            rstd.push(rs);
        }
        let (g, b) = (self.value(gain).row(0), self.value(bias).row(0));
        let mut out = xhat.clone();
        for r in 0..n {
            for ((o, &gv), &bv) in out.row_mut(r).iter_mut().zip(g).zip(b) {
                *o = *o * gv + bv;
            }
        }
        self.push_op(
            "layer_norm",
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            &[x, gain, bias],
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if len == 0 || start + len > xv.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {start}..{} of {}", start + len, xv.cols()),
            ));
        }
        let mut data = Vec::with_capacity(xv.rows() * len);
        for r in 0..xv.rows() {
            data.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let out = Tensor2::from_vec(xv.rows(), len, data)?;
        self.push_op("slice_cols", out, Op::SliceCols { x, start }, &[x])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.value(p).rows(),
            None => return Err(Error::shape("concat_cols", "no parts")),
        };
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor2::from_vec(rows, cols, data)?;
        self.push_op("concat_cols", out, Op::ConcatCols(parts.to_vec()), parts)
    }

    /// Row lookup: output row `i` is `table[idx[i]]`.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if let Some(&bad) = idx.iter().find(|&&i| i >= tv.rows()) {
            return Err(Error::TokenOutOfRange {
                index: bad,
                vocab: tv.rows(),
            });
        }
        if idx.is_empty() {
            return Err(Error::shape("gather_rows", "empty index list"));
        }
        let mut data = Vec::with_capacity(idx.len() * tv.cols());
        for &i in idx {
            data.extend_from_slice(tv.row(i));
        }
        let out = Tensor2::from_vec(idx.len(), tv.cols(), data)?;
        let op = Op::GatherRows {
            table,
            idx: idx.to_vec(),
        };
        self.push_op("gather_rows", out, op, &[table])
    }

    /// Mean over unmasked rows of `-log softmax(logits)[target]`.
    pub fn cross_entropy_logits(
        &mut self,
        logits: Var,
        targets: &[usize],
        mask: &[bool],
    ) -> Result<Var> {
        let lv = self.value(logits);
        let (n, vocab) = lv.shape();
        if targets.len() != n || mask.len() != n {
            return Err(Error::shape(
                "cross_entropy_logits",
                format!(
                    "{n} rows, {} targets, {} mask entries",
                    targets.len(),
                    mask.len()
                ),
            ));
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::EmptyMask);
        }
        if !lv.is_finite() {
            return Err(Error::non_finite("cross_entropy_logits input"));
        }
        let mut probs = Tensor2::zeros(n, vocab);
        let mut total = T::zero();
        for r in 0..n {
            if !mask[r] {
                continue;
            }
            let t = targets[r];
            if t >= vocab {
                return Err(Error::TokenOutOfRange { index: t, vocab });
            }
            let row = lv.row(r);
            let lse = tensor::log_sum_exp(row);
            total = total + (lse - row[t]);
            for (p, &v) in probs.row_mut(r).iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
        }
        let out = Tensor2::scalar(total / c(count as f64));
        let op = Op::CrossEntropy {
            logits,
            probs,
            targets: targets.to_vec(),
            mask: mask.to_vec(),
            count,
        };
        self.push_op("cross_entropy_logits", out, op, &[logits])
    }

    pub fn frobenius_sq(&mut self, x: Var) -> Result<Var> {
        let out = Tensor2::scalar(self.value(x).sum_sq());
        self.push_op("frobenius_sq", out, Op::FrobeniusSq(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor2::scalar(self.value(x).sum());
        self.push_op("sum", out, Op::Sum(x), &[x])
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Grads<T>> {
        let rv = self.value(root);
        if rv.shape() != (1, 1) {
            return Err(Error::NonScalarRoot {
                rows: rv.rows(),
                cols: rv.cols(),
            });
        }
        let mut grads: Vec<Option<Tensor2<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor2::ones(1, 1));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Grads { grads, shapes })
    }

    fn propagate(&self, i: usize, g: &Tensor2<T>, grads: &mut [Option<Tensor2<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let out = &*node.value;
        let mut acc = |v: Var, t: Tensor2<T>| {
            if self.nodes[v.0].needs_grad {
                match &mut grads[v.0] {
                    Some(e) => e.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            }
        };
        let wants = |v: Var| self.nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    acc(*a, tensor::matmul_nt(g, self.value(*b))?);
                }
                if wants(*b) {
                    acc(*b, tensor::matmul_tn(self.value(*a), g)?);
                }
            }
            Op::MatMulNt(a, b) => {
                if wants(*a) {
                    acc(*a, tensor::matmul(g, self.value(*b))?);
                }
                if wants(*b) {
                    acc(*b, tensor::matmul_tn(g, self.value(*a))?);
                }
            }
            Op::Transpose(x) => acc(*x, g.transpose()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(x, row) => {
                acc(*x, g.clone());
                if wants(*row) {
                    acc(*row, column_sums(g));
                }
            }
            Op::Scale(x, s) => acc(*x, g.map(|v| v * *s)),
            Op::Hadamard(a, b) => {
                if wants(*a) {
                    acc(*a, g.zip_map(self.value(*b), |gv, bv| gv * bv));
                }
                if wants(*b) {
                    acc(*b, g.zip_map(self.value(*a), |gv, av| gv * av));
                }
            }
            Op::Sigmoid(x) => acc(*x, g.zip_map(out, |gv, y| gv * y * (T::one() - y))),
            Op::Gelu(x) => acc(
                *x,
                g.zip_map(self.value(*x), |gv, xv| gv * tensor::gelu_grad_scalar(xv)),
            ),
            Op::Softmax(x) => {
                let mut dx = Tensor2::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let (y, gr) = (out.row(r), g.row(r));
                    let dot = y
                        .iter()
                        .zip(gr)
                        .fold(T::zero(), |a, (&yv, &gv)| a + yv * gv);
                    for ((d, &yv), &gv) in dx.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *d = yv * (gv - dot);
                    }
                }
                acc(*x, dx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let (n, d) = xhat.shape();
                if wants(*x) {
                    let gainv = self.value(*gain).row(0);
                    let inv_d: T = c(1.0 / d as f64);
                    let mut dx = Tensor2::zeros(n, d);
                    let mut dxhat = vec![T::zero(); d];
                    for (r, &rs) in rstd.iter().enumerate().take(n) {
                        for ((dh, &gv), &gainv) in dxhat.iter_mut().zip(g.row(r)).zip(gainv) {
                            *dh = gv * gainv;
                        }
                        let h = xhat.row(r);
                        let s1 = dxhat.iter().fold(T::zero(), |a, &v| a + v);
                        let s2 = dxhat
                            .iter()
                            .zip(h)
                            .fold(T::zero(), |a, (&v, &hv)| a + v * hv);
                        for ((o, &dh), &hv) in dx.row_mut(r).iter_mut().zip(&dxhat).zip(h) {
                            *o = rs * (dh - (s1 + hv * s2) * inv_d);
                        }
                    }
                    acc(*x, dx);
                }
                if wants(*gain) {
                    acc(*gain, column_sums(&g.zip_map(xhat, |gv, hv| gv * hv)));
                }
                if wants(*bias) {
                    acc(*bias, column_sums(g));
                }
            }
            Op::SliceCols { x, start } => {
                let (rows, cols) = self.value(*x).shape();
                let mut dx = Tensor2::zeros(rows, cols);
                for r in 0..rows {
                    dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*x, dx);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let width = self.value(p).cols();
                    if wants(p) {
                        let mut data = Vec::with_capacity(g.rows() * width);
                        for r in 0..g.rows() {
                            data.extend_from_slice(&g.row(r)[offset..offset + width]);
                        }
                        acc(p, Tensor2::from_vec(g.rows(), width, data)?);
                    }
                    offset += width;
                }
            }
            Op::GatherRows { table, idx } => {
                let (rows, cols) = self.value(*table).shape();
                let mut dt = Tensor2::zeros(rows, cols);
                for (r, &t) in idx.iter().enumerate() {
                    for (d, &gv) in dt.row_mut(t).iter_mut().zip(g.row(r)) {
                        *d = *d + gv;
                    }
                }
                acc(*table, dt);
            }
            Op::CrossEntropy {
                logits,
                probs,
                targets,
                mask,
                count,
            } => {
                let scale = g.item() / c(*count as f64);
                let mut dl = Tensor2::zeros(probs.rows(), probs.cols());
                for r in 0..probs.rows() {
                    if !mask[r] {
                        continue;
                    }
                    for (d, &p) in dl.row_mut(r).iter_mut().zip(probs.row(r)) {
                        *d = p * scale;
                    }
                    let t = targets[r];
                    let cur = dl.get(r, t);
                    dl.set(r, t, cur - scale);
                }
                acc(*logits, dl);
            }
            Op::FrobeniusSq(x) => {
                let s = g.item() * c(2.0);
                acc(*x, self.value(*x).map(|v| v * s));
            }
            Op::Sum(x) => {
                let (rows, cols) = self.value(*x).shape();
                acc(*x, Tensor2::filled(rows, cols, g.item()));
            }
        }
        Ok(())
    }
}

fn column_sums<T: Scalar>(g: &Tensor2<T>) -> Tensor2<T> {
    let mut out = Tensor2::zeros(1, g.cols());
    for r in 0..g.rows() {
        for (o, &v) in out.row_mut(0).iter_mut().zip(g.row(r)) {
            *o = *o + v;
        }
    }
    out
}

/// Gradients produced by one backward sweep.
pub struct Grads<T> {
    grads: Vec<Option<Tensor2<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Grads<T> {
    /// Gradient of `v`; exact zeros when `v` is not on any path to the root.
    pub fn wrt(&self, v: Var) -> Tensor2<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor2::zeros(r, c)
            }
        }
    }

    /// Moves the gradient out, leaving zeros behind.
    pub fn take(&mut self, v: Var) -> Tensor2<T> {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor2::zeros(r, c)
            }
        }
    }

    pub fn reached(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor2<f64> {
        Tensor2::from_rows(rows).unwrap()
    }

    #[test]
    fn frobenius_gradient_is_two_w() {
        let mut g = Graph::new();
        let w = g.param(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let loss = g.frobenius_sq(w).unwrap();
        assert_eq!(g.value(loss).item(), 30.0);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(w).data(), &[2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn unreachable_leaf_gets_exact_zero() {
        let mut g = Graph::new();
        let w = g.param(t(&[vec![1.0, 2.0]]));
        let other = g.param(t(&[vec![5.0, 6.0, 7.0]]));
        let loss = g.frobenius_sq(w).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(!grads.reached(other));
        assert_eq!(grads.wrt(other).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn hadamard_with_constant_partner() {
        let mut g = Graph::new();
        let x = g.param(t(&[vec![1.0, -2.0], vec![3.0, 0.5]]));
        let y = g.constant(t(&[vec![0.1, 0.2], vec![0.3, 0.4]]));
        let h = g.hadamard(x, y).unwrap();
        let s = g.sum(h).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(x), *g.value(y));
    }

    #[test]
    fn fan_out_accumulates_branch_gradients() {
        // loss = sum(x ⊙ a) + sum(x ⊙ b)  ⇒  ∂/∂x = a + b
        let mut g = Graph::new();
        let x = g.param(t(&[vec![1.0, 2.0, 3.0]]));
        let a = g.constant(t(&[vec![0.5, -1.0, 2.0]]));
        let b = g.constant(t(&[vec![1.5, 4.0, -3.0]]));
        let ha = g.hadamard(x, a).unwrap();
        let hb = g.hadamard(x, b).unwrap();
        let sa = g.sum(ha).unwrap();
        let sb = g.sum(hb).unwrap();
        let loss = g.add(sa, sb).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).data(), &[2.0, 3.0, -1.0]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor2::<f64>::ones(2, 2));
        assert!(matches!(
            g.backward(x),
            Err(Error::NonScalarRoot { rows: 2, cols: 2 })
        ));
    }

    #[test]
    fn overflow_is_numeric_error() {
        let mut g = Graph::new();
        let x = g.param(Tensor2::<f32>::filled(1, 1, 1e30));
        let y = g.param(Tensor2::<f32>::filled(1, 1, 1e30));
        assert!(matches!(g.matmul(x, y), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn softmax_examples() {
        let mut g = Graph::new();
        let x = g.constant(t(&[vec![0.0, 0.0], vec![1000.0, 0.0]]));
        let y = g.softmax_rows(x).unwrap();
        let y = g.value(y);
        assert_eq!(y.row(0), &[0.5, 0.5]);
        assert!((y.get(1, 0) - 1.0).abs() < 1e-12 && y.get(1, 1) < 1e-300 + 1e-12);

        let mut g = Graph::new();
        let x = g.constant(t(&[vec![1.0, 2.0, 3.0]]));
        let y = g.softmax_rows(x).unwrap();
        for (got, want) in g.value(y).row(0).iter().zip([0.09003, 0.24473, 0.66524]) {
            assert!((got - want).abs() < 1e-5);
        }
    }

    #[test]
    fn sigmoid_examples() {
        let mut g = Graph::new();
        let x = g.constant(t(&[vec![0.0, 1e4, 2.0, -1e4]]));
        let y = g.sigmoid(x).unwrap();
        let y = g.value(y).row(0).to_vec();
        assert_eq!(y[0], 0.5);
        assert!((y[1] - 1.0).abs() < 1e-6);
        assert!((y[2] - 0.880797).abs() < 1e-6);
        assert!(y[3] >= 0.0 && y[3] < 1e-6);
    }

    #[test]
    fn hadamard_examples() {
        let mut g = Graph::new();
        let x = g.constant(t(&[vec![2.0, -4.0]]));
        let y = g.constant(t(&[vec![0.5, 0.25]]));
        let ones = g.constant(Tensor2::ones(1, 2));
        let h = g.hadamard(x, y).unwrap();
        assert_eq!(g.value(h).data(), &[1.0, -1.0]);
        let id = g.hadamard(x, ones).unwrap();
        assert_eq!(g.value(id), g.value(x));
        let bad = g.constant(Tensor2::ones(2, 1));
        assert!(g.hadamard(x, bad).is_err());
    }

    #[test]
    fn frobenius_examples() {
        let mut g = Graph::<f64>::new();
        let z = g.constant(Tensor2::zeros(3, 2));
        let i = g.constant(Tensor2::eye(3));
        let fz = g.frobenius_sq(z).unwrap();
        let fi = g.frobenius_sq(i).unwrap();
        assert_eq!(g.value(fz).item(), 0.0);
        assert_eq!(g.value(fi).item(), 3.0);
    }

    #[test]
    fn cross_entropy_examples() {
        let mut g = Graph::new();
        let l = g.constant(t(&[vec![10.0, -10.0]]));
        let ce = g.cross_entropy_logits(l, &[0], &[true]).unwrap();
        assert!(g.value(ce).item() < 1e-4);

        let u = g.constant(t(&[vec![0.3, 0.3]]));
        let ce = g.cross_entropy_logits(u, &[1], &[true]).unwrap();
        assert!((g.value(ce).item() - std::f64::consts::LN_2).abs() < 1e-6);

        // probabilities 0.5 (two equal logits) and 0.25 (four equal logits)
        let two = g.constant(t(&[vec![0.0, 0.0, -1e3, -1e3], vec![1.0, 1.0, 1.0, 1.0]]));
        let ce = g.cross_entropy_logits(two, &[1, 3], &[true, true]).unwrap();
        assert!((g.value(ce).item() - 1.03972).abs() < 1e-5);
    }

    #[test]
    fn cross_entropy_errors() {
        let mut g = Graph::new();
        let l = g.constant(t(&[vec![1.0, 2.0], vec![0.0, 0.0]]));
        assert!(matches!(
            g.cross_entropy_logits(l, &[0, 1], &[false, false]),
            Err(Error::EmptyMask)
        ));
        assert!(matches!(
            g.cross_entropy_logits(l, &[0, 2], &[true, true]),
            Err(Error::TokenOutOfRange { index: 2, vocab: 2 })
        ));
        // out-of-range targets under a false mask are ignored
        assert!(g.cross_entropy_logits(l, &[0, 99], &[true, false]).is_ok());
    }

    #[test]
    fn layer_norm_examples() {
        let mut g = Graph::new();
        let gain = g.constant(Tensor2::ones(1, 2));
        let bias = g.constant(Tensor2::zeros(1, 2));
        let x = g.constant(t(&[vec![1.0, 3.0], vec![4.0, 4.0], vec![-1.0, 1.0]]));
        let y = g.layer_norm(x, gain, bias, 1e-5).unwrap();
        let y = g.value(y);
        assert!((y.get(0, 0) + 1.0).abs() < 1e-3 && (y.get(0, 1) - 1.0).abs() < 1e-3);
        assert_eq!(y.row(1), &[0.0, 0.0]);
        assert!((y.get(2, 0) + 1.0).abs() < 1e-4 && (y.get(2, 1) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn gather_rows_rejects_bad_index() {
        let mut g = Graph::new();
        let table = g.param(Tensor2::<f64>::ones(3, 2));
        assert!(matches!(
            g.gather_rows(table, &[0, 3]),
            Err(Error::TokenOutOfRange { index: 3, vocab: 3 })
        ));
    }
}
