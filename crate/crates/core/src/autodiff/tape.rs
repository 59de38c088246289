use std::borrow::Cow;

use crate::scalar::Scalar;

use super::{AutodiffError, GradBuffer, ParamId, ParamStore, Tensor};

/// Logit value used for masked positions.
pub const MASK_SENTINEL: f64 = -1e9;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Tanh(Var),
    Relu(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    Transpose(Var),
    Reshape(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    NarrowCols { x: Var, start: usize },
    GatherRows { x: Var, index: Vec<usize> },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<f64> },
    MaskedSoftmax { x: Var, mask: Vec<bool> },
    MaskedLogSoftmax { x: Var, mask: Vec<bool> },
    MaskFill { x: Var, mask: Vec<bool> },
    Pick { x: Var, index: usize },
}

#[derive(Debug)]
struct Node<'p, T: Clone> {
    rows: usize,
    cols: usize,
    value: Cow<'p, [T]>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
///
/// Parameters are borrowed, not copied; a tape lives for one forward and
/// backward pass and is then dropped.
#[derive(Debug)]
pub struct Tape<'p, T: Scalar> {
    nodes: Vec<Node<'p, T>>,
    params: Vec<(ParamId, Var)>,
    param_slots: Vec<Option<Var>>,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, a: (usize, usize), b: (usize, usize)) -> AutodiffError {
    AutodiffError::Shape {
        op,
        left: vec![a.0, a.1],
        right: vec![b.0, b.1],
    }
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
            param_slots: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Cow<'p, [T]>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<'p, T> {
        &self.nodes[v.0]
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    /// The single element of a `1×1` value.
    pub fn scalar(&self, v: Var) -> T {
        self.value(v)[0]
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.node(*v).needs_grad)
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Result<Var, AutodiffError> {
        if rows * cols != data.len() {
            return Err(AutodiffError::DataLength {
                shape: vec![rows, cols],
                len: data.len(),
            });
        }
        Ok(self.push(rows, cols, Cow::Owned(data), Op::Leaf, false))
    }

    /// A differentiable input that is not part of a parameter store.
    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Result<Var, AutodiffError> {
        let v = self.constant(rows, cols, data)?;
        self.nodes[v.0].needs_grad = true;
        Ok(v)
    }

    /// A tensor as a leaf, borrowed; differentiable iff it requires grad.
    pub fn tensor(&mut self, t: &'p Tensor<T>) -> Var {
        let (rows, cols) = t.matrix_dims();
        self.push(rows, cols, Cow::Borrowed(t.data()), Op::Leaf, t.requires_grad())
    }

    /// A parameter leaf; repeated calls with the same id share one node.
    pub fn param(&mut self, store: &'p ParamStore<T>, id: ParamId) -> Var {
        if self.param_slots.len() < store.len() {
            self.param_slots.resize(store.len(), None);
        }
        if let Some(v) = self.param_slots[id.index()] {
            return v;
        }
        let v = self.tensor(store.get(id));
        self.nodes[v.0].needs_grad = true;
        self.param_slots[id.index()] = Some(v);
        self.params.push((id, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(shape_err("matmul", (m, k), (k2, n)));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, self.value(a), false, self.value(b), false, &mut out, false);
        let g = self.grad_of(&[a, b]);
        Ok(self.push(m, n, Cow::Owned(out), Op::MatMul(a, b), g))
    }

    /// `a · bᵀ` for `a: m×k`, `b: n×k`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        if k != k2 {
            return Err(shape_err("matmul_t", (m, k), (n, k2)));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, self.value(a), false, self.value(b), true, &mut out, false);
        let g = self.grad_of(&[a, b]);
        Ok(self.push(m, n, Cow::Owned(out), Op::MatMulT(a, b), g))
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<(usize, usize, Vec<T>), AutodiffError> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(shape_err(op, da, db));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        Ok((da.0, da.1, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db && db.0 == 1 && db.1 == da.1 {
            return self.add_row(a, b);
        }
        let (r, c, out) = self.zip_same("add", a, b, |x, y| x + y)?;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(r, c, Cow::Owned(out), Op::Add(a, b), g))
    }

    /// Adds a `1×n` row to every row of an `m×n` value.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, AutodiffError> {
        let (m, n) = self.dims(a);
        let dr = self.dims(row);
        if dr != (1, n) {
            return Err(shape_err("add_row", (m, n), dr));
        }
        let r = self.value(row);
        let out = self
            .value(a)
            .chunks(n.max(1))
            .flat_map(|chunk| chunk.iter().zip(r).map(|(x, y)| *x + *y))
            .collect();
        let g = self.grad_of(&[a, row]);
        Ok(self.push(m, n, Cow::Owned(out), Op::AddRow(a, row), g))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (r, c, out) = self.zip_same("sub", a, b, |x, y| x - y)?;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(r, c, Cow::Owned(out), Op::Sub(a, b), g))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (r, c, out) = self.zip_same("mul", a, b, |x, y| x * y)?;
        let g = self.grad_of(&[a, b]);
        Ok(self.push(r, c, Cow::Owned(out), Op::Mul(a, b), g))
    }

    fn map(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let (r, c) = self.dims(a);
        let out = self.value(a).iter().map(|x| f(*x)).collect();
        let g = self.grad_of(&[a]);
        self.push(r, c, Cow::Owned(out), op, g)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.map(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, T::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(T::zero()), Op::Relu(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.map(a, T::ln, Op::Log(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).iter().map(|v| v.f64()).sum();
        let g = self.grad_of(&[a]);
        self.push(1, 1, Cow::Owned(vec![T::of(s)]), Op::Sum(a), g)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let vals = self.value(a);
        let s: f64 = vals.iter().map(|v| v.f64()).sum::<f64>() / vals.len().max(1) as f64;
        let g = self.grad_of(&[a]);
        self.push(1, 1, Cow::Owned(vec![T::of(s)]), Op::Mean(a), g)
    }

    /// Column means: `m×n → 1×n`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let vals = self.value(a);
        let out = (0..n)
            .map(|j| T::of((0..m).map(|i| vals[i * n + j].f64()).sum::<f64>() / m.max(1) as f64))
            .collect();
        let g = self.grad_of(&[a]);
        self.push(1, n, Cow::Owned(out), Op::MeanRows(a), g)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (m, n) = self.dims(a);
        let vals = self.value(a);
        let out = (0..n).flat_map(|j| (0..m).map(move |i| vals[i * n + j])).collect();
        let g = self.grad_of(&[a]);
        self.push(n, m, Cow::Owned(out), Op::Transpose(a), g)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, AutodiffError> {
        let d = self.dims(a);
        if d.0 * d.1 != rows * cols {
            return Err(shape_err("reshape", d, (rows, cols)));
        }
        let out = self.value(a).to_vec();
        let g = self.grad_of(&[a]);
        Ok(self.push(rows, cols, Cow::Owned(out), Op::Reshape(a), g))
    }

    /// Stacks values vertically (axis 0).
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let cols = self.dims(parts[0]).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for p in parts {
            let d = self.dims(*p);
            if d.1 != cols {
                return Err(shape_err("concat_rows", self.dims(parts[0]), d));
            }
            rows += d.0;
            out.extend_from_slice(self.value(*p));
        }
        let g = self.grad_of(parts);
        Ok(self.push(rows, cols, Cow::Owned(out), Op::ConcatRows(parts.to_vec()), g))
    }

    /// Joins values side by side (axis 1).
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        let rows = self.dims(parts[0]).0;
        let mut cols = 0;
        for p in parts {
            let d = self.dims(*p);
            if d.0 != rows {
                return Err(shape_err("concat_cols", self.dims(parts[0]), d));
            }
            cols += d.1;
        }
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                let c = self.dims(*p).1;
                out.extend_from_slice(&self.value(*p)[i * c..(i + 1) * c]);
            }
        }
        let g = self.grad_of(parts);
        Ok(self.push(rows, cols, Cow::Owned(out), Op::ConcatCols(parts.to_vec()), g))
    }

    /// Columns `start..start+len`.
    pub fn narrow_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let (m, n) = self.dims(a);
        if start + len > n {
            return Err(shape_err("narrow_cols", (m, n), (start, len)));
        }
        let vals = self.value(a);
        let out = (0..m).flat_map(|i| vals[i * n + start..i * n + start + len].iter().copied()).collect();
        let g = self.grad_of(&[a]);
        Ok(self.push(m, len, Cow::Owned(out), Op::NarrowCols { x: a, start }, g))
    }

    /// Selects rows by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var, AutodiffError> {
        let (m, n) = self.dims(a);
        if let Some(bad) = index.iter().find(|i| **i >= m) {
            return Err(shape_err("gather_rows", (m, n), (*bad, 0)));
        }
        let vals = self.value(a);
        let out = index.iter().flat_map(|&i| vals[i * n..(i + 1) * n].iter().copied()).collect();
        let g = self.grad_of(&[a]);
        Ok(self.push(index.len(), n, Cow::Owned(out), Op::GatherRows { x: a, index: index.to_vec() }, g))
    }

    /// Rows `start..start+len`.
    pub fn narrow_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let index: Vec<usize> = (start..start + len).collect();
        self.gather_rows(a, &index)
    }

    /// Row-wise layer normalization with `1×n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, AutodiffError> {
        let (m, n) = self.dims(x);
        for p in [gain, bias] {
            if self.dims(p) != (1, n) {
                return Err(shape_err("layer_norm", (m, n), self.dims(p)));
            }
        }
        let (vals, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let mut xhat = Vec::with_capacity(m * n);
        let mut rstd = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m * n);
        for row in vals.chunks(n.max(1)) {
            let mean = row.iter().map(|v| v.f64()).sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / n as f64;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd.push(r);
            for (j, v) in row.iter().enumerate() {
                let h = T::of((v.f64() - mean) * r);
                xhat.push(h);
                out.push(h * gv[j] + bv[j]);
            }
        }
        let g = self.grad_of(&[x, gain, bias]);
        Ok(self.push(m, n, Cow::Owned(out), Op::LayerNorm { x, gain, bias, xhat, rstd }, g))
    }

    fn check_mask(&self, op: &'static str, x: Var, mask: &[bool]) -> Result<(usize, usize), AutodiffError> {
        let (m, n) = self.dims(x);
        if mask.len() != n {
            return Err(shape_err(op, (m, n), (1, mask.len())));
        }
        Ok((m, n))
    }

    /// Row-wise softmax over unmasked columns; masked entries are exactly 0.
    /// A fully masked row yields all zeros.
    pub fn masked_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var, AutodiffError> {
        let (m, n) = self.check_mask("masked_softmax", x, mask)?;
        let mut out = vec![T::zero(); m * n];
        for (row, dst) in self.value(x).chunks(n.max(1)).zip(out.chunks_mut(n.max(1))) {
            softmax_row(row, mask, dst);
        }
        let g = self.grad_of(&[x]);
        Ok(self.push(m, n, Cow::Owned(out), Op::MaskedSoftmax { x, mask: mask.to_vec() }, g))
    }

    /// Row-wise log-softmax over unmasked columns; masked entries are 0.
    pub fn masked_log_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var, AutodiffError> {
        let (m, n) = self.check_mask("masked_log_softmax", x, mask)?;
        let mut out = vec![T::zero(); m * n];
        for (row, dst) in self.value(x).chunks(n.max(1)).zip(out.chunks_mut(n.max(1))) {
            let lse = log_sum_exp(row, mask);
            for j in 0..n {
                if mask[j] {
                    dst[j] = T::of(row[j].f64() - lse);
                }
            }
        }
        let g = self.grad_of(&[x]);
        Ok(self.push(m, n, Cow::Owned(out), Op::MaskedLogSoftmax { x, mask: mask.to_vec() }, g))
    }

    /// Replaces masked columns with [`MASK_SENTINEL`].
    pub fn mask_fill(&mut self, x: Var, mask: &[bool]) -> Result<Var, AutodiffError> {
        let (m, n) = self.check_mask("mask_fill", x, mask)?;
        let sentinel = T::of(MASK_SENTINEL);
        let out = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, v)| if mask[i % n] { *v } else { sentinel })
            .collect();
        let g = self.grad_of(&[x]);
        Ok(self.push(m, n, Cow::Owned(out), Op::MaskFill { x, mask: mask.to_vec() }, g))
    }

    /// The element at flat `index`, as `1×1`.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var, AutodiffError> {
        let d = self.dims(x);
        if index >= d.0 * d.1 {
            return Err(shape_err("pick", d, (index, 1)));
        }
        let v = self.value(x)[index];
        let g = self.grad_of(&[x]);
        Ok(self.push(1, 1, Cow::Owned(vec![v]), Op::Pick { x, index }, g))
    }

    /// Reverse pass from a `1×1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, AutodiffError> {
        self.backward_seeded(loss, T::one())
    }

    /// Reverse pass from a `1×1` loss whose incoming gradient is `seed`.
    pub fn backward_seeded(&self, loss: Var, seed: T) -> Result<Gradients<T>, AutodiffError> {
        let d = self.dims(loss);
        if d != (1, 1) {
            return Err(AutodiffError::NotScalar(vec![d.0, d.1]));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![seed]);
        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if node.needs_grad {
                self.propagate(node, &gy, &mut grads);
            }
            grads[idx] = Some(gy);
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn propagate(&self, node: &Node<'p, T>, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let (rows, cols) = (node.rows, node.cols);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = cols;
                if self.node(*a).needs_grad {
                    let bv = self.value(*b);
                    let ga = slot(grads, *a, m * k);
                    T::gemm(m, n, k, gy, false, bv, true, ga, true);
                }
                if self.node(*b).needs_grad {
                    let av = self.value(*a);
                    let gb = slot(grads, *b, k * n);
                    T::gemm(k, m, n, av, true, gy, false, gb, true);
                }
            }
            Op::MatMulT(a, b) => {
                let (m, k) = self.dims(*a);
                let n = cols;
                if self.node(*a).needs_grad {
                    let bv = self.value(*b);
                    let ga = slot(grads, *a, m * k);
                    T::gemm(m, n, k, gy, false, bv, false, ga, true);
                }
                if self.node(*b).needs_grad {
                    let av = self.value(*a);
                    let gb = slot(grads, *b, n * k);
                    T::gemm(n, m, k, gy, true, av, false, gb, true);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |g| add_into(g, gy));
                self.accumulate(grads, *b, |g| add_into(g, gy));
            }
            Op::AddRow(a, r) => {
                self.accumulate(grads, *a, |g| add_into(g, gy));
                self.accumulate(grads, *r, |g| {
                    for j in 0..cols {
                        let s: f64 = (0..rows).map(|i| gy[i * cols + j].f64()).sum();
                        g[j] += T::of(s);
                    }
                });
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |g| add_into(g, gy));
                self.accumulate(grads, *b, |g| g.iter_mut().zip(gy).for_each(|(x, y)| *x -= *y));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |g| {
                    for i in 0..g.len() {
                        g[i] += gy[i] * bv[i];
                    }
                });
                self.accumulate(grads, *b, |g| {
                    for i in 0..g.len() {
                        g[i] += gy[i] * av[i];
                    }
                });
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, |g| {
                g.iter_mut().zip(gy).for_each(|(x, y)| *x += *y * *s);
            }),
            Op::Tanh(a) => {
                let y = &node.value;
                self.accumulate(grads, *a, |g| {
                    for i in 0..g.len() {
                        g[i] += gy[i] * (T::one() - y[i] * y[i]);
                    }
                });
            }
            Op::Relu(a) => {
                let xv = self.value(*a);
                self.accumulate(grads, *a, |g| {
                    for i in 0..g.len() {
                        if xv[i] > T::zero() {
                            g[i] += gy[i];
                        }
                    }
                });
            }
            Op::Log(a) => {
                let xv = self.value(*a);
                self.accumulate(grads, *a, |g| {
                    for i in 0..g.len() {
                        g[i] += gy[i] / xv[i];
                    }
                });
            }
            Op::Sum(a) => self.accumulate(grads, *a, |g| g.iter_mut().for_each(|x| *x += gy[0])),
            Op::Mean(a) => self.accumulate(grads, *a, |g| {
                let share = gy[0] / T::of(g.len() as f64);
                g.iter_mut().for_each(|x| *x += share);
            }),
            Op::MeanRows(a) => {
                let m = self.dims(*a).0;
                self.accumulate(grads, *a, |g| {
                    let inv = T::of(1.0 / m as f64);
                    for i in 0..m {
                        for j in 0..cols {
                            g[i * cols + j] += gy[j] * inv;
                        }
                    }
                });
            }
            Op::Transpose(a) => self.accumulate(grads, *a, |g| {
                // node is rows×cols, input is cols×rows
                for i in 0..rows {
                    for j in 0..cols {
                        g[j * rows + i] += gy[i * cols + j];
                    }
                }
            }),
            Op::Reshape(a) => self.accumulate(grads, *a, |g| add_into(g, gy)),
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    self.accumulate(grads, *p, |g| add_into(g, &gy[offset..offset + len]));
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let c = self.dims(*p).1;
                    self.accumulate(grads, *p, |g| {
                        for i in 0..rows {
                            for j in 0..c {
                                g[i * c + j] += gy[i * cols + offset + j];
                            }
                        }
                    });
                    offset += c;
                }
            }
            Op::NarrowCols { x, start } => {
                let n = self.dims(*x).1;
                self.accumulate(grads, *x, |g| {
                    for i in 0..rows {
                        for j in 0..cols {
                            g[i * n + start + j] += gy[i * cols + j];
                        }
                    }
                });
            }
            Op::GatherRows { x, index } => self.accumulate(grads, *x, |g| {
                for (r, &src) in index.iter().enumerate() {
                    for j in 0..cols {
                        g[src * cols + j] += gy[r * cols + j];
                    }
                }
            }),
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let gv = self.value(*gain);
                self.accumulate(grads, *gain, |g| {
                    for j in 0..cols {
                        let s: f64 = (0..rows).map(|i| (gy[i * cols + j] * xhat[i * cols + j]).f64()).sum();
                        g[j] += T::of(s);
                    }
                });
                self.accumulate(grads, *bias, |g| {
                    for j in 0..cols {
                        let s: f64 = (0..rows).map(|i| gy[i * cols + j].f64()).sum();
                        g[j] += T::of(s);
                    }
                });
                self.accumulate(grads, *x, |g| {
                    let n = cols as f64;
                    for i in 0..rows {
                        let row = i * cols..(i + 1) * cols;
                        let dxhat: Vec<f64> = row.clone().map(|p| (gy[p] * gv[p - i * cols]).f64()).collect();
                        let sum_d: f64 = dxhat.iter().sum();
                        let sum_dx: f64 = dxhat.iter().zip(&xhat[row.clone()]).map(|(d, h)| d * h.f64()).sum();
                        for (j, p) in row.enumerate() {
                            let v = rstd[i] / n * (n * dxhat[j] - sum_d - xhat[p].f64() * sum_dx);
                            g[p] += T::of(v);
                        }
                    }
                });
            }
            Op::MaskedSoftmax { x, mask } => {
                let y = &node.value;
                self.accumulate(grads, *x, |g| {
                    for i in 0..rows {
                        let r = i * cols..(i + 1) * cols;
                        let dot: f64 = r.clone().map(|p| (y[p] * gy[p]).f64()).sum();
                        for (j, p) in r.enumerate() {
                            if mask[j] {
                                g[p] += T::of(y[p].f64() * (gy[p].f64() - dot));
                            }
                        }
                    }
                });
            }
            Op::MaskedLogSoftmax { x, mask } => {
                let y = &node.value;
                self.accumulate(grads, *x, |g| {
                    for i in 0..rows {
                        let r = i * cols..(i + 1) * cols;
                        let total: f64 = r.clone().filter(|p| mask[p - i * cols]).map(|p| gy[p].f64()).sum();
                        for (j, p) in r.enumerate() {
                            if mask[j] {
                                g[p] += T::of(gy[p].f64() - y[p].f64().exp() * total);
                            }
                        }
                    }
                });
            }
            Op::MaskFill { x, mask } => self.accumulate(grads, *x, |g| {
                for (p, v) in g.iter_mut().enumerate() {
                    if mask[p % cols] {
                        *v += gy[p];
                    }
                }
            }),
            Op::Pick { x, index } => self.accumulate(grads, *x, |g| g[*index] += gy[0]),
        }
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if self.node(v).needs_grad {
            let len = self.value(v).len();
            f(slot(grads, v, len));
        }
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Scalar>(g: &mut [T], src: &[T]) {
    g.iter_mut().zip(src).for_each(|(a, b)| *a += *b);
}

fn log_sum_exp<T: Scalar>(row: &[T], mask: &[bool]) -> f64 {
    let max = row
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(v, _)| v.f64())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = row
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(v, _)| (v.f64() - max).exp())
        .sum();
    max + s.ln()
}

/// Softmax of one row restricted to `mask`; masked slots get exactly 0.
pub fn softmax_row<T: Scalar>(row: &[T], mask: &[bool], out: &mut [T]) {
    let max = row
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(v, _)| v.f64())
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        out.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let mut total = 0.0;
    let mut exps = Vec::with_capacity(row.len());
    for (v, m) in row.iter().zip(mask) {
        let e = if *m { (v.f64() - max).exp() } else { 0.0 };
        total += e;
        exps.push(e);
    }
    for (o, e) in out.iter_mut().zip(exps) {
        *o = T::of(e / total);
    }
}

/// Result of a reverse pass.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    params: Vec<(ParamId, Var)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `v`, if any flowed to it.
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds parameter gradients into `buffer`.
    pub fn accumulate_params(&self, buffer: &mut GradBuffer<T>) {
        for (id, v) in &self.params {
            if let Some(g) = self.wrt(*v) {
                add_into(buffer.get_mut(*id), g);
            }
        }
    }

    /// Adds parameter gradients into each tensor's `grad` field.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) {
        for (id, v) in &self.params {
            if let Some(g) = self.wrt(*v) {
                store.get_mut(*id).accumulate_grad(g);
            }
        }
    }
}
