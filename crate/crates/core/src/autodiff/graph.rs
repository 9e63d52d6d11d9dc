//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and backward is a single reverse sweep.

use super::params::{ParamId, ParamStore};
use super::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, stable_sum, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    SoftmaxRows(Var),
    Log(Var),
    Sum(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    GatherRows { table: Var, rows: Vec<usize> },
    GatherSum { x: Var, indices: Vec<usize> },
    GroupLogSoftmax { x: Var, groups: Vec<(usize, usize)> },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    param: Option<ParamId>,
}

/// Record of one forward pass. Rebuilt for every evaluation.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Per-node gradients returned by [`Graph::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`; zero if unreachable.
    pub fn get(&self, var: Var) -> Tensor {
        let shape = &self.shapes[var.0];
        match &self.grads[var.0] {
            Some(g) => Tensor::new(shape.clone(), g.clone()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Constant input; receives no parameter gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Leaf bound to a parameter; backward accumulates into the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.value(id).clone(), Op::Leaf);
        self.nodes[v.0].param = Some(id);
        v
    }

    fn matrix_dims(&self, v: Var, op: &'static str, name: &str) -> Result<(usize, usize)> {
        self.value(v).expect_matrix(op, name)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.matrix_dims(a, "matmul", "lhs")?;
        let (k2, m) = self.matrix_dims(b, "matmul", "rhs")?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("lhs is {n}x{k}, rhs is {k2}x{m}")));
        }
        let mut out = vec![0.0; n * m];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b)))
    }

    /// `a · bᵀ` for `a: n×k`, `b: m×k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.matrix_dims(a, "matmul_nt", "lhs")?;
        let (m, k2) = self.matrix_dims(b, "matmul_nt", "rhs")?;
        if k != k2 {
            return Err(Error::shape(
                "matmul_nt",
                format!("lhs is {n}x{k}, rhs is {m}x{k2} (transposed operand needs {k} columns)"),
            ));
        }
        let mut out = vec![0.0; n * m];
        matmul_nt_into(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::MatMulNt(a, b)))
    }

    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (n, m) = self.matrix_dims(x, "add_bias", "input")?;
        let bias = self.value(b);
        if bias.shape() != [m] {
            return Err(Error::shape(
                "add_bias",
                format!("input is {n}x{m}, bias has shape {:?}", bias.shape()),
            ));
        }
        let bias = bias.data().to_vec();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(m) {
            for (o, bv) in row.iter_mut().zip(&bias) {
                *o += bv;
            }
        }
        Ok(self.push(Tensor::matrix(n, m, out)?, Op::AddBias(x, b)))
    }

    /// `x·w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (_, d_in) = self.matrix_dims(x, "linear", "x")?;
        let (w_in, d_out) = self.matrix_dims(w, "linear", "w")?;
        if d_in != w_in {
            return Err(Error::shape(
                "linear",
                format!("x has {d_in} columns but w has {w_in} rows"),
            ));
        }
        if self.value(b).shape() != [d_out] {
            return Err(Error::shape(
                "linear",
                format!("w produces {d_out} outputs but b has shape {:?}", self.value(b).shape()),
            ));
        }
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let mut t = self.value(x).clone();
        t.data_mut().iter_mut().for_each(|v| *v *= factor);
        self.push(t, Op::Scale(x, factor))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut t = self.value(x).clone();
        t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(t, Op::Relu(x))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.matrix_dims(x, "softmax_rows", "input")?;
        let out = softmax_rows_values(self.value(x).data(), c);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::SoftmaxRows(x)))
    }

    pub fn log(&mut self, x: Var) -> Var {
        let mut t = self.value(x).clone();
        t.data_mut().iter_mut().for_each(|v| *v = v.ln());
        self.push(t, Op::Log(x))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = stable_sum(self.value(x).data().iter().copied());
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims(x, "slice_cols", "input")?;
        if len == 0 || start + len > c {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {start}..{} out of {c}", start + len),
            ));
        }
        let src = self.value(x);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&src.row(i)[start..start + len]);
        }
        Ok(self.push(Tensor::matrix(r, len, out)?, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::shape("concat_cols", "no operands"))?;
        let (r, _) = self.matrix_dims(first, "concat_cols", "operand 0")?;
        let mut total = 0;
        for (i, &p) in parts.iter().enumerate() {
            let (pr, pc) = self.matrix_dims(p, "concat_cols", "operand")?;
            if pr != r {
                return Err(Error::shape(
                    "concat_cols",
                    format!("operand {i} has {pr} rows, expected {r}"),
                ));
            }
            total += pc;
        }
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(i));
            }
        }
        Ok(self.push(Tensor::matrix(r, total, out)?, Op::ConcatCols(parts.to_vec())))
    }

    /// Row lookup `table[rows[i], :]`.
    pub fn gather_rows(&mut self, table: Var, rows: &[usize]) -> Result<Var> {
        let (n, c) = self.matrix_dims(table, "gather_rows", "table")?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::shape("gather_rows", format!("row {bad} out of {n}")));
        }
        if rows.is_empty() {
            return Err(Error::shape("gather_rows", "no rows requested"));
        }
        let t = self.value(table);
        let out: Vec<f64> = rows.iter().flat_map(|&r| t.row(r).iter().copied()).collect();
        Ok(self.push(
            Tensor::matrix(rows.len(), c, out)?,
            Op::GatherRows {
                table,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Scalar `Σ x.flat[i]` over `indices`, repeats allowed.
    pub fn gather_sum(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let n = self.value(x).len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::shape("gather_sum", format!("index {bad} out of {n}")));
        }
        let data = self.value(x).data();
        let s = stable_sum(indices.iter().map(|&i| data[i]));
        Ok(self.push(
            Tensor::scalar(s),
            Op::GatherSum {
                x,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Per-row, per-group log-softmax with an implicit extra logit fixed at 0
    /// in front of every group.
    ///
    /// `groups` are `(start, len)` column ranges that partition the columns of
    /// `x` in order. The output has `cols + groups.len()` columns laid out as
    /// `[0-slot, group entries...]` per group; see [`group_slot`].
    pub fn group_log_softmax(&mut self, x: Var, groups: &[(usize, usize)]) -> Result<Var> {
        let (r, c) = self.matrix_dims(x, "group_log_softmax", "input")?;
        check_groups(groups, c)?;
        let width = c + groups.len();
        let src = self.value(x);
        let mut out = vec![0.0; r * width];
        for i in 0..r {
            let row = src.row(i);
            let dst = &mut out[i * width..(i + 1) * width];
            for (g, &(start, len)) in groups.iter().enumerate() {
                let logits = &row[start..start + len];
                let m = logits.iter().copied().fold(0.0f64, f64::max);
                let denom = stable_sum(
                    std::iter::once((-m).exp()).chain(logits.iter().map(|v| (v - m).exp())),
                );
                let lse = m + denom.ln();
                let base = start + g;
                dst[base] = -lse;
                for (j, v) in logits.iter().enumerate() {
                    dst[base + 1 + j] = v - lse;
                }
            }
        }
        Ok(self.push(
            Tensor::matrix(r, width, out)?,
            Op::GroupLogSoftmax {
                x,
                groups: groups.to_vec(),
            },
        ))
    }

    /// Reverse sweep from the scalar `loss`. Parameter gradients are *added*
    /// to the store's accumulators.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(upstream) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &upstream, &mut grads);
            grads[idx] = Some(upstream);
        }

        for (node, g) in self.nodes.iter().zip(&grads) {
            if let (Some(id), Some(g)) = (node.param, g) {
                for (acc, v) in store.grad_mut(id).data_mut().iter_mut().zip(g) {
                    *acc += v;
                }
            }
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, idx: usize, up: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = dims(self.value(*a));
                let m = self.value(*b).cols();
                // dA = dY · Bᵀ, dB = Aᵀ · dY
                let ga = acc(grads, *a, n * k);
                matmul_nt_into(up, self.value(*b).data(), ga, n, m, k);
                let gb = acc(grads, *b, k * m);
                matmul_tn_into(self.value(*a).data(), up, gb, n, k, m);
            }
            Op::MatMulNt(a, b) => {
                let (n, k) = dims(self.value(*a));
                let m = self.value(*b).rows();
                // Y = A·Bᵀ: dA = dY · B, dB = dYᵀ · A
                let ga = acc(grads, *a, n * k);
                matmul_into(up, self.value(*b).data(), ga, n, m, k);
                let gb = acc(grads, *b, m * k);
                matmul_tn_into(up, self.value(*a).data(), gb, n, m, k);
            }
            Op::AddBias(x, b) => {
                let m = self.value(*b).len();
                let gx = acc(grads, *x, up.len());
                add_into(gx, up);
                let gb = acc(grads, *b, m);
                for row in up.chunks(m) {
                    add_into(gb, row);
                }
            }
            Op::Add(a, b) => {
                add_into(acc(grads, *a, up.len()), up);
                add_into(acc(grads, *b, up.len()), up);
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let ga = acc(grads, *a, up.len());
                for ((g, u), y) in ga.iter_mut().zip(up).zip(bv) {
                    *g += u * y;
                }
                let gb = acc(grads, *b, up.len());
                for ((g, u), x) in gb.iter_mut().zip(up).zip(av) {
                    *g += u * x;
                }
            }
            Op::Scale(x, f) => {
                let gx = acc(grads, *x, up.len());
                for (g, u) in gx.iter_mut().zip(up) {
                    *g += u * f;
                }
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let gx = acc(grads, *x, up.len());
                for ((g, u), v) in gx.iter_mut().zip(up).zip(xv) {
                    if *v > 0.0 {
                        *g += u;
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                let y = node.value.data();
                let c = node.value.cols();
                let gx = acc(grads, *x, up.len());
                for ((yr, ur), gr) in y.chunks(c).zip(up.chunks(c)).zip(gx.chunks_mut(c)) {
                    let dot = stable_sum(yr.iter().zip(ur).map(|(a, b)| a * b));
                    for ((g, yv), uv) in gr.iter_mut().zip(yr).zip(ur) {
                        *g += yv * (uv - dot);
                    }
                }
            }
            Op::Log(x) => {
                let xv = self.value(*x).data();
                let gx = acc(grads, *x, up.len());
                for ((g, u), v) in gx.iter_mut().zip(up).zip(xv) {
                    *g += u / v;
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                let gx = acc(grads, *x, n);
                gx.iter_mut().for_each(|g| *g += up[0]);
            }
            Op::SliceCols { x, start } => {
                let (r, c) = dims(self.value(*x));
                let len = node.value.cols();
                let gx = acc(grads, *x, r * c);
                for i in 0..r {
                    add_into(&mut gx[i * c + start..i * c + start + len], &up[i * len..(i + 1) * len]);
                }
            }
            Op::ConcatCols(parts) => {
                let r = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let pc = self.value(*p).cols();
                    let gp = acc(grads, *p, r * pc);
                    for i in 0..r {
                        add_into(
                            &mut gp[i * pc..(i + 1) * pc],
                            &up[i * total + offset..i * total + offset + pc],
                        );
                    }
                    offset += pc;
                }
            }
            Op::GatherRows { table, rows } => {
                let (n, c) = dims(self.value(*table));
                let gt = acc(grads, *table, n * c);
                for (i, &r) in rows.iter().enumerate() {
                    add_into(&mut gt[r * c..(r + 1) * c], &up[i * c..(i + 1) * c]);
                }
            }
            Op::GatherSum { x, indices } => {
                let n = self.value(*x).len();
                let gx = acc(grads, *x, n);
                for &i in indices {
                    gx[i] += up[0];
                }
            }
            Op::GroupLogSoftmax { x, groups } => {
                let (r, c) = dims(self.value(*x));
                let width = node.value.cols();
                let y = node.value.data();
                let gx = acc(grads, *x, r * c);
                for i in 0..r {
                    let yr = &y[i * width..(i + 1) * width];
                    let ur = &up[i * width..(i + 1) * width];
                    for (g, &(start, len)) in groups.iter().enumerate() {
                        let base = start + g;
                        let total = stable_sum(ur[base..base + len + 1].iter().copied());
                        for j in 0..len {
                            let p = yr[base + 1 + j].exp();
                            gx[i * c + start + j] += ur[base + 1 + j] - p * total;
                        }
                    }
                }
            }
        }
    }
}

/// Output column of entry `index` (`None` = the fixed-zero slot) of group `g`
/// in a [`Graph::group_log_softmax`] result.
pub fn group_slot(groups: &[(usize, usize)], g: usize, index: Option<usize>) -> usize {
    let base = groups[g].0 + g;
    match index {
        None => base,
        Some(i) => base + 1 + i,
    }
}

pub(crate) fn check_groups(groups: &[(usize, usize)], cols: usize) -> Result<()> {
    let mut next = 0;
    for &(start, len) in groups {
        if start != next {
            return Err(Error::shape(
                "group_log_softmax",
                format!("groups must tile columns in order; expected start {next}, got {start}"),
            ));
        }
        next = start + len;
    }
    if next != cols {
        return Err(Error::shape(
            "group_log_softmax",
            format!("groups cover {next} columns, input has {cols}"),
        ));
    }
    Ok(())
}

pub(crate) fn softmax_rows_values(data: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks(cols) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let denom = stable_sum(exps.iter().copied());
        out.extend(exps.iter().map(|e| e / denom));
    }
    out
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
