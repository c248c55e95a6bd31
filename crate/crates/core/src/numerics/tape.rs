//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation of one forward pass in execution order,
//! so the node list is already a topological order and [`Tape::backward`] is
//! a single reverse sweep. Tapes are built per forward pass and thrown away.

use std::sync::Arc;

use rand::Rng;

use super::tensor::{gemm, softmax_in_place, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Compressed neighbor lists of one graph, applied blockwise to stacked node
/// matrices (`rows = blocks * node_count`).
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    node_count: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Adjacency {
    /// Builds neighbor lists by a stable bucket pass over directed `(src, dst)`
    /// pairs: `dst` becomes a neighbor of `src`, in edge-list order.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut counts = vec![0usize; node_count + 1];
        for &(s, d) in edges {
            if s >= node_count || d >= node_count {
                return Err(Error::InvalidInput(format!(
                    "edge ({s}, {d}) out of range for {node_count} nodes"
                )));
            }
            counts[s + 1] += 1;
        }
        for i in 0..node_count {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut neighbors = vec![0; edges.len()];
        for &(s, d) in edges {
            neighbors[cursor[s]] = d;
            cursor[s] += 1;
        }
        Ok(Adjacency {
            node_count,
            offsets,
            neighbors,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    Reshape(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Sqrt(Var),
    Square(Var),
    LayerNorm { x: Var, inv_std: Vec<f64> },
    GroupMean(Var, usize),
    NeighborMean(Var, Arc<Adjacency>),
    Softmax(Var),
    Attention(Box<AttentionSaved>),
    Dropout(Var, Vec<f64>),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct AttentionSaved {
    q: Var,
    k: Var,
    v: Var,
    groups: usize,
    heads: usize,
    /// Per (group, head) probability blocks, laid out `[group][head][q][k]`.
    probs: Vec<f64>,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every node that required one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape_err(what: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::InvalidShape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape()))
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Per-head attention probabilities recorded by [`Tape::attention`], laid
    /// out as `[group][head][query][key]`.
    pub fn attention_probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention(saved) => Some(&saved.probs),
            _ => None,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul", av, bv));
        }
        let out = gemm(av, false, bv, false);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, what: &str, a: Var, b: Var) -> Result<()> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(what, av, bv));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    fn row_broadcast(&mut self, a: Var, row: Var, mul: bool) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(shape_err("row broadcast", av, rv));
        }
        let c = av.cols();
        let r = rv.data();
        let mut out = av.clone();
        for chunk in out.data_mut().chunks_mut(c) {
            for (x, &y) in chunk.iter_mut().zip(r) {
                if mul {
                    *x *= y;
                } else {
                    *x += y;
                }
            }
        }
        let rg = self.rg(a) || self.rg(row);
        let op = if mul {
            Op::MulRow(a, row)
        } else {
            Op::AddRow(a, row)
        };
        Ok(self.push(out, op, rg))
    }

    /// `a + row` with `row` (1 × c) broadcast over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast(a, row, false)
    }

    /// `a ∘ row` with `row` (1 × c) broadcast over every row of `a`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.row_broadcast(a, row, true)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x + s);
        let rg = self.rg(a);
        self.push(out, Op::AddScalar(a), rg)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(shape_err("concat", av, bv));
        }
        let (r, ca, cb) = (av.rows(), av.cols(), bv.cols());
        let mut out = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            out.extend_from_slice(av.row(i));
            out.extend_from_slice(bv.row(i));
        }
        let out = Tensor::from_rows(r, ca + cb, out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = self.value(a);
        if start >= end || end > av.cols() {
            return Err(Error::InvalidShape(format!(
                "slice {start}..{end} of {:?}",
                av.shape()
            )));
        }
        let r = av.rows();
        let mut out = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            out.extend_from_slice(&av.row(i)[start..end]);
        }
        let out = Tensor::from_rows(r, end - start, out)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    /// Output row `i` is input row `idx[i]`; rows may repeat.
    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let av = self.value(a);
        if idx.is_empty() || idx.iter().any(|&i| i >= av.rows()) {
            return Err(Error::InvalidShape(format!(
                "gather index out of range for {:?}",
                av.shape()
            )));
        }
        let c = av.cols();
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in &idx {
            out.extend_from_slice(av.row(i));
        }
        let out = Tensor::from_rows(idx.len(), c, out)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::GatherRows(a, idx), rg))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(a).clone().reshape(rows, cols)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self
            .value(a)
            .map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.rg(a);
        self.push(out, Op::LeakyRelu(a, slope), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.data().iter().any(|&x| x <= 0.0) {
            return Err(Error::InvalidInput("sqrt of a non-positive entry".into()));
        }
        let out = av.map(f64::sqrt);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Sqrt(a), rg))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        let rg = self.rg(a);
        self.push(out, Op::Square(a), rg)
    }

    /// Normalizes each row to zero mean and unit variance (no affine part).
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let av = self.value(a);
        let c = av.cols();
        let mut out = av.clone();
        let mut inv_std = Vec::with_capacity(av.rows());
        for row in out.data_mut().chunks_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * is;
            }
            inv_std.push(is);
        }
        let rg = self.rg(a);
        self.push(out, Op::LayerNorm { x: a, inv_std }, rg)
    }

    /// Mean over consecutive groups of `group` rows: `[g·group × c] → [g × c]`.
    pub fn group_mean(&mut self, a: Var, group: usize) -> Result<Var> {
        let av = self.value(a);
        if group == 0 || av.rows() % group != 0 {
            return Err(Error::InvalidShape(format!(
                "{} rows not divisible into groups of {group}",
                av.rows()
            )));
        }
        let c = av.cols();
        let g = av.rows() / group;
        let mut out = vec![0.0; g * c];
        for (i, row) in av.data().chunks(c).enumerate() {
            let o = &mut out[(i / group) * c..(i / group + 1) * c];
            for (x, y) in o.iter_mut().zip(row) {
                *x += y;
            }
        }
        for x in &mut out {
            *x /= group as f64;
        }
        let out = Tensor::from_rows(g, c, out)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::GroupMean(a, group), rg))
    }

    /// Mean of neighbor rows per node; nodes without neighbors receive zeros.
    /// `a` holds one or more graphs stacked in blocks of `adj.node_count()` rows.
    pub fn neighbor_mean(&mut self, a: Var, adj: Arc<Adjacency>) -> Result<Var> {
        let av = self.value(a);
        let n = adj.node_count;
        if n == 0 || av.rows() % n != 0 {
            return Err(Error::InvalidShape(format!(
                "{} rows are not a whole number of {n}-node graphs",
                av.rows()
            )));
        }
        let c = av.cols();
        let mut out = vec![0.0; av.len()];
        for block in 0..av.rows() / n {
            let base = block * n;
            for i in 0..n {
                let nb = adj.neighbors(i);
                if nb.is_empty() {
                    continue;
                }
                let o = &mut out[(base + i) * c..(base + i + 1) * c];
                for &j in nb {
                    for (x, y) in o.iter_mut().zip(av.row(base + j)) {
                        *x += y;
                    }
                }
                let inv = 1.0 / nb.len() as f64;
                for x in o.iter_mut() {
                    *x *= inv;
                }
            }
        }
        let out = Tensor::from_rows(av.rows(), c, out)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::NeighborMean(a, adj), rg))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = super::tensor::softmax_rows(self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Softmax(a), rg))
    }

    /// Grouped multi-head scaled dot-product attention.
    ///
    /// `q` is `[groups·nq × d]`, `k` and `v` are `[groups·nk × d]`; queries of
    /// group `g` only see keys of group `g`. Columns are split into `heads`
    /// contiguous slices of width `d / heads`, each scaled by `1/√(d/heads)`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, groups: usize, heads: usize) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let d = qv.cols();
        if kv.cols() != d || vv.cols() != d {
            return Err(Error::InvalidShape(format!(
                "attention widths differ: q {:?}, k {:?}, v {:?}",
                qv.shape(),
                kv.shape(),
                vv.shape()
            )));
        }
        if kv.rows() != vv.rows() {
            return Err(shape_err("attention keys/values", kv, vv));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::InvalidShape(format!("width {d} not divisible by {heads} heads")));
        }
        if groups == 0 || qv.rows() % groups != 0 || kv.rows() % groups != 0 || kv.rows() == 0 {
            return Err(Error::InvalidShape(format!(
                "{} queries / {} keys do not split into {groups} groups",
                qv.rows(),
                kv.rows()
            )));
        }
        let nq = qv.rows() / groups;
        let nk = kv.rows() / groups;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qd, kd, vd) = (qv.data(), kv.data(), vv.data());
        let mut probs = vec![0.0; groups * heads * nq * nk];
        let mut out = vec![0.0; qv.rows() * d];
        for g in 0..groups {
            for h in 0..heads {
                let off = h * dh;
                let pblock = &mut probs[(g * heads + h) * nq * nk..(g * heads + h + 1) * nq * nk];
                for i in 0..nq {
                    let qi = &qd[(g * nq + i) * d + off..(g * nq + i) * d + off + dh];
                    let prow = &mut pblock[i * nk..(i + 1) * nk];
                    for (j, p) in prow.iter_mut().enumerate() {
                        let kj = &kd[(g * nk + j) * d + off..(g * nk + j) * d + off + dh];
                        *p = dot(qi, kj) * scale;
                    }
                    softmax_in_place(prow);
                    let orow = &mut out[(g * nq + i) * d + off..(g * nq + i) * d + off + dh];
                    for (j, &p) in prow.iter().enumerate() {
                        let vj = &vd[(g * nk + j) * d + off..(g * nk + j) * d + off + dh];
                        for (o, &x) in orow.iter_mut().zip(vj) {
                            *o += p * x;
                        }
                    }
                }
            }
        }
        let out = Tensor::from_rows(qv.rows(), d, out)?;
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        let saved = AttentionSaved {
            q,
            k,
            v,
            groups,
            heads,
            probs,
        };
        Ok(self.push(out, Op::Attention(Box::new(saved)), rg))
    }

    /// Inverted dropout: zeroes entries with probability `rate` and rescales
    /// survivors by `1/(1-rate)`. Without an rng (eval mode) this is the identity.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: Option<&mut R>) -> Var {
        let rng = match rng {
            Some(r) if rate > 0.0 => r,
            _ => return a,
        };
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mut out = self.value(a).clone();
        for (x, m) in out.data_mut().iter_mut().zip(&mask) {
            *x *= m;
        }
        let rg = self.rg(a);
        self.push(out, Op::Dropout(a, mask), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let out = Tensor::scalar(av.sum() / av.len() as f64);
        let rg = self.rg(a);
        self.push(out, Op::Mean(a), rg)
    }

    /// Gradients of the scalar `root` with respect to all nodes that require
    /// one. Each call recomputes from scratch, so repeated calls agree.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.len() != 1 {
            return Err(Error::ContractViolation(format!(
                "backward needs a scalar root, got shape {:?}",
                rv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::new(rv.shape().to_vec(), vec![1.0])?);
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (idx, g) in grads.iter_mut().enumerate() {
            if !self.nodes[idx].requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(e) => e.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    acc(*a, gemm(g, false, bv, true));
                }
                if self.rg(*b) {
                    acc(*b, gemm(av, true, g, false));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, g.zip_map(bv, |x, y| x * y));
                acc(*b, g.zip_map(av, |x, y| x * y));
            }
            Op::AddRow(a, r) => {
                acc(*a, g.clone());
                if self.rg(*r) {
                    acc(*r, column_sums(g));
                }
            }
            Op::MulRow(a, r) => {
                let (av, rv) = (self.value(*a), self.value(*r));
                let c = g.cols();
                if self.rg(*a) {
                    let mut ga = g.clone();
                    for row in ga.data_mut().chunks_mut(c) {
                        for (x, y) in row.iter_mut().zip(rv.data()) {
                            *x *= y;
                        }
                    }
                    acc(*a, ga);
                }
                if self.rg(*r) {
                    acc(*r, column_sums(&g.zip_map(av, |x, y| x * y)));
                }
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let r = g.rows();
                let mut ga = Vec::with_capacity(r * ca);
                let mut gb = Vec::with_capacity(r * cb);
                for i in 0..r {
                    let row = g.row(i);
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                acc(*a, Tensor::from_rows(r, ca, ga).expect("concat grad"));
                acc(*b, Tensor::from_rows(r, cb, gb).expect("concat grad"));
            }
            Op::SliceCols(a, start) => {
                let av = self.value(*a);
                let (r, c, w) = (av.rows(), av.cols(), g.cols());
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    ga.data_mut()[i * c + start..i * c + start + w].copy_from_slice(g.row(i));
                }
                acc(*a, reshape_like(ga, av));
            }
            Op::GatherRows(a, idx) => {
                let av = self.value(*a);
                let c = av.cols();
                let mut ga = Tensor::zeros(av.rows(), c);
                for (o, &i) in idx.iter().enumerate() {
                    let dst = &mut ga.data_mut()[i * c..(i + 1) * c];
                    for (x, y) in dst.iter_mut().zip(g.row(o)) {
                        *x += y;
                    }
                }
                acc(*a, reshape_like(ga, av));
            }
            Op::Reshape(a) => {
                let av = self.value(*a);
                acc(*a, reshape_like(g.clone(), av));
            }
            Op::LeakyRelu(a, slope) => {
                let av = self.value(*a);
                acc(*a, g.zip_map(av, |x, y| if y > 0.0 { x } else { slope * x }));
            }
            Op::Tanh(a) => {
                acc(*a, g.zip_map(&node.value, |x, y| x * (1.0 - y * y)));
            }
            Op::Sigmoid(a) => {
                acc(*a, g.zip_map(&node.value, |x, y| x * y * (1.0 - y)));
            }
            Op::Sqrt(a) => {
                acc(*a, g.zip_map(&node.value, |x, y| x * 0.5 / y));
            }
            Op::Square(a) => {
                let av = self.value(*a);
                acc(*a, g.zip_map(av, |x, y| 2.0 * x * y));
            }
            Op::LayerNorm { x, inv_std } => {
                let c = g.cols();
                let xhat = &node.value;
                let mut gx = g.clone();
                for (i, row) in gx.data_mut().chunks_mut(c).enumerate() {
                    let xh = xhat.row(i);
                    let gm = row.iter().sum::<f64>() / c as f64;
                    let gxh = row.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = inv_std[i] * (*v - gm - xh[j] * gxh);
                    }
                }
                acc(*x, gx);
            }
            Op::GroupMean(a, group) => {
                let av = self.value(*a);
                let c = av.cols();
                let mut ga = Tensor::zeros(av.rows(), c);
                let inv = 1.0 / *group as f64;
                for (i, row) in ga.data_mut().chunks_mut(c).enumerate() {
                    for (x, y) in row.iter_mut().zip(g.row(i / group)) {
                        *x = y * inv;
                    }
                }
                acc(*a, ga);
            }
            Op::NeighborMean(a, adj) => {
                let av = self.value(*a);
                let (n, c) = (adj.node_count, av.cols());
                let mut ga = Tensor::zeros(av.rows(), c);
                for block in 0..av.rows() / n {
                    let base = block * n;
                    for i in 0..n {
                        let nb = adj.neighbors(i);
                        if nb.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / nb.len() as f64;
                        let gi = g.row(base + i);
                        for &j in nb {
                            let dst = &mut ga.data_mut()[(base + j) * c..(base + j + 1) * c];
                            for (x, y) in dst.iter_mut().zip(gi) {
                                *x += y * inv;
                            }
                        }
                    }
                }
                acc(*a, ga);
            }
            Op::Softmax(a) => {
                let c = g.cols();
                let mut ga = g.clone();
                for (i, row) in ga.data_mut().chunks_mut(c).enumerate() {
                    let p = node.value.row(i);
                    let dotp: f64 = row.iter().zip(p).map(|(x, y)| x * y).sum();
                    for (x, &pj) in row.iter_mut().zip(p) {
                        *x = pj * (*x - dotp);
                    }
                }
                acc(*a, ga);
            }
            Op::Attention(saved) => self.attention_backward(saved, g, &mut acc),
            Op::Dropout(a, mask) => {
                let mut ga = g.clone();
                for (x, m) in ga.data_mut().iter_mut().zip(mask) {
                    *x *= m;
                }
                acc(*a, ga);
            }
            Op::Sum(a) => {
                let av = self.value(*a);
                acc(*a, Tensor::new(av.shape().to_vec(), vec![g.item(); av.len()]).expect("sum grad"));
            }
            Op::Mean(a) => {
                let av = self.value(*a);
                let v = g.item() / av.len() as f64;
                acc(*a, Tensor::new(av.shape().to_vec(), vec![v; av.len()]).expect("mean grad"));
            }
        }
    }

    fn attention_backward(&self, s: &AttentionSaved, g: &Tensor, acc: &mut impl FnMut(Var, Tensor)) {
        let (qv, kv, vv) = (self.value(s.q), self.value(s.k), self.value(s.v));
        let d = qv.cols();
        let nq = qv.rows() / s.groups;
        let nk = kv.rows() / s.groups;
        let dh = d / s.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qd, kd, vd, gd) = (qv.data(), kv.data(), vv.data(), g.data());
        let mut gq = vec![0.0; qv.len()];
        let mut gk = vec![0.0; kv.len()];
        let mut gv = vec![0.0; vv.len()];
        let mut dp = vec![0.0; nk];
        for grp in 0..s.groups {
            for h in 0..s.heads {
                let off = h * dh;
                let pblock = &s.probs[(grp * s.heads + h) * nq * nk..(grp * s.heads + h + 1) * nq * nk];
                for i in 0..nq {
                    let qrow = (grp * nq + i) * d + off;
                    let go = &gd[qrow..qrow + dh];
                    let p = &pblock[i * nk..(i + 1) * nk];
                    // dP = dO · Vᵀ, dV += Pᵀ dO
                    for j in 0..nk {
                        let vrow = (grp * nk + j) * d + off;
                        dp[j] = dot(go, &vd[vrow..vrow + dh]);
                        for (x, &y) in gv[vrow..vrow + dh].iter_mut().zip(go) {
                            *x += p[j] * y;
                        }
                    }
                    let pdp: f64 = p.iter().zip(&dp).map(|(a, b)| a * b).sum();
                    for j in 0..nk {
                        let ds = p[j] * (dp[j] - pdp) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let krow = (grp * nk + j) * d + off;
                        for t in 0..dh {
                            gq[qrow + t] += ds * kd[krow + t];
                            gk[krow + t] += ds * qd[qrow + t];
                        }
                    }
                }
            }
        }
        let mk = |like: &Tensor, data: Vec<f64>| Tensor::new(like.shape().to_vec(), data).expect("attention grad");
        acc(s.q, mk(qv, gq));
        acc(s.k, mk(kv, gk));
        acc(s.v, mk(vv, gv));
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn column_sums(g: &Tensor) -> Tensor {
    let c = g.cols();
    let mut out = vec![0.0; c];
    for row in g.data().chunks(c) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += x;
        }
    }
    Tensor::row_vector(out)
}

fn reshape_like(t: Tensor, like: &Tensor) -> Tensor {
    Tensor::new(like.shape().to_vec(), t.into_data()).expect("same element count")
}
