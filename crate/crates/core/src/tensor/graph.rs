//! Define-by-run computation graph.
//!
//! Nodes are appended in evaluation order, so insertion order is a
//! topological order and [`Graph::backward`] is a single reverse sweep.

use super::{shape_err, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulScalar(NodeId, f64),
    DivScalar(NodeId, NodeId),
    Mean(NodeId),
    Sum(NodeId),
    Concat(Vec<NodeId>, usize),
    RowSelect(NodeId, Vec<usize>),
    Slice(NodeId, usize),
    Cols(NodeId, usize),
    Reshape(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Sqrt(NodeId),
    Softmax(NodeId, usize),
    SignSt(NodeId),
    HardSelectSt { probs: NodeId, values: NodeId, selected: usize },
    WeightedSetMean(NodeId, NodeId),
    Bce(NodeId, Vec<f64>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    /// Some `requires_grad` leaf is an ancestor (or this is one).
    tracked: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    /// Evaluate straight-through ops by their surrogate functions.
    soft: bool,
}

/// Sum in ascending order, so the result does not depend on input order.
fn sorted_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

fn st_sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// A graph whose straight-through ops compute the functions their
    /// backward passes differentiate: `sign_st` is the identity and
    /// `hard_select_st` returns the probability-weighted mixture of rows.
    pub fn soft() -> Self {
        Graph { nodes: Vec::new(), soft: true }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[NodeId]) -> NodeId {
        let tracked = parents.iter().any(|p| self.nodes[p.0].tracked);
        self.nodes.push(Node { value, op, tracked });
        NodeId(self.nodes.len() - 1)
    }

    fn out(rows: usize, cols: usize, values: Vec<f64>) -> Tensor {
        Tensor { shape: vec![rows, cols], values, requires_grad: false, grad: None }
    }

    /// Adds a leaf; its `requires_grad` flag decides whether it gets a gradient.
    /// One-dimensional tensors are stored as a single row.
    pub fn leaf(&mut self, mut t: Tensor) -> NodeId {
        let (r, c) = (t.rows(), t.cols());
        t.shape = vec![r, c];
        t.grad = None;
        let tracked = t.requires_grad;
        self.nodes.push(Node { value: t, op: Op::Leaf, tracked });
        NodeId(self.nodes.len() - 1)
    }

    pub fn param(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<NodeId, TensorError> {
        Ok(self.leaf(Tensor::matrix(rows, cols, values)?.with_grad()))
    }

    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<NodeId, TensorError> {
        Ok(self.leaf(Tensor::matrix(rows, cols, values)?))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn values(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value.values
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].value.grad.as_deref()
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        let t = &self.nodes[id.0].value;
        (t.shape[0], t.shape[1])
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.dims(id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(shape_err("matmul", format!("{m}x{k} times {k2}x{n}")));
        }
        let v = matmul_raw(self.values(a), self.values(b), m, k, n);
        Ok(self.push(Self::out(m, n, v), Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.dims(a);
        let v = transpose_raw(self.values(a), r, c);
        self.push(Self::out(c, r, v), Op::Transpose(a), &[a])
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(usize, usize), TensorError> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(shape_err(op, format!("{da:?} vs {db:?}")));
        }
        Ok(da)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (r, c) = self.same_shape("add", a, b)?;
        let v = self.values(a).iter().zip(self.values(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(Self::out(r, c, v), Op::Add(a, b), &[a, b]))
    }

    /// `a + 1 b` for `a: m x n` and a bias row `b: 1 x n`.
    pub fn add_bias(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (m, n) = self.dims(a);
        if self.dims(b) != (1, n) {
            return Err(shape_err("add_bias", format!("{m}x{n} plus {:?}", self.dims(b))));
        }
        let bias = self.values(b);
        let v = self.values(a).chunks(n).flat_map(|row| row.iter().zip(bias).map(|(x, y)| x + y)).collect();
        Ok(self.push(Self::out(m, n, v), Op::AddBias(a, b), &[a, b]))
    }

    /// `a - b` with the `1 x n` row `b` subtracted from every row of `a`.
    pub fn sub_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let n = self.dims(b).1;
        let neg = self.mul_scalar(b, -1.0);
        if self.dims(a).1 != n {
            return Err(shape_err("sub_row", format!("{:?} minus {:?}", self.dims(a), self.dims(b))));
        }
        self.add_bias(a, neg)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (r, c) = self.same_shape("sub", a, b)?;
        let v = self.values(a).iter().zip(self.values(b)).map(|(x, y)| x - y).collect();
        Ok(self.push(Self::out(r, c, v), Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (r, c) = self.same_shape("mul", a, b)?;
        let v = self.values(a).iter().zip(self.values(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(Self::out(r, c, v), Op::Mul(a, b), &[a, b]))
    }

    pub fn mul_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let (r, c) = self.dims(a);
        let v = self.values(a).iter().map(|x| x * s).collect();
        self.push(Self::out(r, c, v), Op::MulScalar(a, s), &[a])
    }

    /// `a / s` for a `1 x 1` node `s`.
    pub fn div_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId, TensorError> {
        if self.dims(s) != (1, 1) {
            return Err(shape_err("div_scalar", format!("divisor must be 1x1, got {:?}", self.dims(s))));
        }
        let (r, c) = self.dims(a);
        let d = self.values(s)[0];
        let v = self.values(a).iter().map(|x| x / d).collect();
        Ok(self.push(Self::out(r, c, v), Op::DivScalar(a, s), &[a, s]))
    }

    /// Mean of all entries, as a `1 x 1` tensor. Like [`Graph::sum`], the
    /// entries are added in sorted order.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let mut vals = self.values(a).to_vec();
        let v = sorted_sum(&mut vals) / vals.len() as f64;
        self.push(Self::out(1, 1, vec![v]), Op::Mean(a), &[a])
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = sorted_sum(&mut self.values(a).to_vec());
        self.push(Self::out(1, 1, vec![v]), Op::Sum(a), &[a])
    }

    /// Concatenation along `axis` (0 stacks rows, 1 joins columns).
    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId, TensorError> {
        if parts.is_empty() || axis > 1 {
            return Err(shape_err("concat", "needs at least one input and axis 0 or 1"));
        }
        let dims: Vec<(usize, usize)> = parts.iter().map(|&p| self.dims(p)).collect();
        let (rows, cols, v) = if axis == 0 {
            let cols = dims[0].1;
            if dims.iter().any(|d| d.1 != cols) {
                return Err(shape_err("concat", format!("column counts differ: {dims:?}")));
            }
            let v: Vec<f64> = parts.iter().flat_map(|&p| self.values(p).iter().copied()).collect();
            (dims.iter().map(|d| d.0).sum(), cols, v)
        } else {
            let rows = dims[0].0;
            if dims.iter().any(|d| d.0 != rows) {
                return Err(shape_err("concat", format!("row counts differ: {dims:?}")));
            }
            let cols: usize = dims.iter().map(|d| d.1).sum();
            let mut v = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for (&p, d) in parts.iter().zip(&dims) {
                    v.extend_from_slice(&self.values(p)[r * d.1..(r + 1) * d.1]);
                }
            }
            (rows, cols, v)
        };
        Ok(self.push(Self::out(rows, cols, v), Op::Concat(parts.to_vec(), axis), parts))
    }

    pub fn row_select(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId, TensorError> {
        let (r, c) = self.dims(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(shape_err("row_select", format!("row {bad} out of {r}")));
        }
        let vals = self.values(a);
        let v = indices.iter().flat_map(|&i| vals[i * c..(i + 1) * c].iter().copied()).collect();
        Ok(self.push(Self::out(indices.len(), c, v), Op::RowSelect(a, indices.to_vec()), &[a]))
    }

    /// `len` consecutive entries of the flattened input starting at `start`,
    /// as a `1 x len` row.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId, TensorError> {
        let n = self.values(a).len();
        if start + len > n {
            return Err(shape_err("slice", format!("{start}..{} out of {n}", start + len)));
        }
        let v = self.values(a)[start..start + len].to_vec();
        Ok(self.push(Self::out(1, len, v), Op::Slice(a, start), &[a]))
    }

    /// Columns `start..start + len` of every row.
    pub fn cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId, TensorError> {
        let (r, c) = self.dims(a);
        if start + len > c {
            return Err(shape_err("cols", format!("{start}..{} out of {c}", start + len)));
        }
        let x = self.values(a);
        let v = (0..r).flat_map(|i| x[i * c + start..i * c + start + len].iter().copied()).collect();
        Ok(self.push(Self::out(r, len, v), Op::Cols(a, start), &[a]))
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId, TensorError> {
        let n = self.values(a).len();
        if rows * cols != n {
            return Err(shape_err("reshape", format!("{n} entries into {rows}x{cols}")));
        }
        let v = self.values(a).to_vec();
        Ok(self.push(Self::out(rows, cols, v), Op::Reshape(a), &[a]))
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let (r, c) = self.dims(a);
        let v = self.values(a).iter().map(|&x| f(x)).collect();
        self.push(Self::out(r, c, v), op, &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, stable_sigmoid, Op::Sigmoid(a))
    }

    pub fn sqrt(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    /// Sign with `sign(0) = +1`; the backward pass is the identity.
    pub fn sign_st(&mut self, a: NodeId) -> NodeId {
        if self.soft {
            return self.unary(a, |x| x, Op::SignSt(a));
        }
        self.unary(a, st_sign, Op::SignSt(a))
    }

    /// Softmax along `axis` (1 normalises each row, 0 each column).
    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId, TensorError> {
        if axis > 1 {
            return Err(shape_err("softmax", format!("axis {axis}")));
        }
        let (r, c) = self.dims(a);
        let x = self.values(a);
        let mut out = vec![0.0; r * c];
        let (outer, inner) = if axis == 1 { (r, c) } else { (c, r) };
        let idx = |o: usize, i: usize| if axis == 1 { o * c + i } else { i * c + o };
        let mut scratch = vec![0.0; inner];
        for o in 0..outer {
            let max = (0..inner).map(|i| x[idx(o, i)]).fold(f64::NEG_INFINITY, f64::max);
            for i in 0..inner {
                scratch[i] = (x[idx(o, i)] - max).exp();
                out[idx(o, i)] = scratch[i];
            }
            let z = sorted_sum(&mut scratch);
            for i in 0..inner {
                out[idx(o, i)] /= z;
            }
        }
        Ok(self.push(Self::out(r, c, out), Op::Softmax(a, axis), &[a]))
    }

    /// Returns the row of `values` with the largest probability (ties to the
    /// lowest index). The backward pass is that of `sum_i probs_i values_i`.
    pub fn hard_select_st(&mut self, probs: NodeId, values: NodeId) -> Result<NodeId, TensorError> {
        let p = self.values(probs);
        let (m, d) = self.dims(values);
        if p.len() != m {
            return Err(shape_err("hard_select_st", format!("{} probabilities for {m} rows", p.len())));
        }
        if p.iter().any(|x| x.is_nan()) {
            return Err(TensorError::NonFinite { op: "hard_select_st" });
        }
        let mut selected = 0;
        for (i, &pi) in p.iter().enumerate() {
            if pi > p[selected] {
                selected = i;
            }
        }
        let v = if self.soft {
            let vals = self.values(values);
            (0..d).map(|k| (0..m).map(|i| p[i] * vals[i * d + k]).sum()).collect()
        } else {
            self.values(values)[selected * d..(selected + 1) * d].to_vec()
        };
        Ok(self.push(Self::out(1, d, v), Op::HardSelectSt { probs, values, selected }, &[probs, values]))
    }

    /// Index chosen by a [`Graph::hard_select_st`] node.
    pub fn selected_index(&self, id: NodeId) -> Option<usize> {
        match self.nodes[id.0].op {
            Op::HardSelectSt { selected, .. } => Some(selected),
            _ => None,
        }
    }

    /// `(1/m) M^T w` for `M: m x d` and weights `w: m x 1`, as a `1 x d` row.
    /// Each column is summed in sorted order, so the result is bit-identical
    /// under any permutation of the rows.
    pub fn weighted_set_mean(&mut self, mat: NodeId, weights: NodeId) -> Result<NodeId, TensorError> {
        let (m, d) = self.dims(mat);
        if self.dims(weights) != (m, 1) {
            return Err(shape_err("weighted_set_mean", format!("{m}x{d} with weights {:?}", self.dims(weights))));
        }
        if m == 0 {
            return Err(shape_err("weighted_set_mean", "empty set"));
        }
        let (mv, wv) = (self.values(mat), self.values(weights));
        let mut terms = vec![0.0; m];
        let mut out = Vec::with_capacity(d);
        for k in 0..d {
            for i in 0..m {
                terms[i] = wv[i] * mv[i * d + k];
            }
            out.push(sorted_sum(&mut terms) / m as f64);
        }
        Ok(self.push(Self::out(1, d, out), Op::WeightedSetMean(mat, weights), &[mat, weights]))
    }

    /// Mean logistic loss `ln(1 + exp(-y z))` over all logits, labels in {-1, +1}.
    pub fn bce(&mut self, logits: NodeId, labels: &[f64]) -> Result<NodeId, TensorError> {
        let z = self.values(logits);
        if z.len() != labels.len() {
            return Err(shape_err("bce", format!("{} logits for {} labels", z.len(), labels.len())));
        }
        let v = z.iter().zip(labels).map(|(&z, &y)| softplus(-y * z)).sum::<f64>() / z.len() as f64;
        Ok(self.push(Self::out(1, 1, vec![v]), Op::Bce(logits, labels.to_vec()), &[logits]))
    }

    /// Reverse sweep from a `1 x 1` node. Gradients accumulate additively and
    /// are stored on every tracked node, including `requires_grad` leaves.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TensorError> {
        if self.dims(loss) != (1, 1) {
            return Err(shape_err("backward", format!("loss must be 1x1, got {:?}", self.dims(loss))));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].tracked {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            self.nodes[idx].value.grad = Some(g);
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let y = &node.value.values;
        let mut acc = |id: NodeId, contrib: Vec<f64>| {
            if !self.nodes[id.0].tracked {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => existing.iter_mut().zip(&contrib).for_each(|(e, c)| *e += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                if self.nodes[a.0].tracked {
                    let bt = transpose_raw(self.values(*b), k, n);
                    acc(*a, matmul_raw(g, &bt, m, n, k));
                }
                if self.nodes[b.0].tracked {
                    let at = transpose_raw(self.values(*a), m, k);
                    acc(*b, matmul_raw(&at, g, k, m, n));
                }
            }
            Op::Transpose(a) => {
                let (r, c) = self.dims(*a);
                acc(*a, transpose_raw(g, c, r));
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::AddBias(a, b) => {
                let n = self.dims(*b).1;
                acc(*a, g.to_vec());
                let mut gb = vec![0.0; n];
                for row in g.chunks(n) {
                    gb.iter_mut().zip(row).for_each(|(s, x)| *s += x);
                }
                acc(*b, gb);
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.values(*a), self.values(*b));
                acc(*a, g.iter().zip(bv).map(|(g, b)| g * b).collect());
                acc(*b, g.iter().zip(av).map(|(g, a)| g * a).collect());
            }
            Op::MulScalar(a, s) => acc(*a, g.iter().map(|x| x * s).collect()),
            Op::DivScalar(a, s) => {
                let d = self.values(*s)[0];
                acc(*a, g.iter().map(|x| x / d).collect());
                let dot: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                acc(*s, vec![-dot / d]);
            }
            Op::Mean(a) => {
                let n = self.values(*a).len();
                acc(*a, vec![g[0] / n as f64; n]);
            }
            Op::Sum(a) => {
                let n = self.values(*a).len();
                acc(*a, vec![g[0]; n]);
            }
            Op::Concat(parts, axis) => {
                let cols = node.value.shape[1];
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = self.dims(p);
                    let part = if *axis == 0 {
                        g[offset * cols..(offset + pr) * cols].to_vec()
                    } else {
                        (0..pr).flat_map(|r| g[r * cols + offset..r * cols + offset + pc].iter().copied()).collect()
                    };
                    offset += if *axis == 0 { pr } else { pc };
                    acc(p, part);
                }
            }
            Op::RowSelect(a, indices) => {
                let (r, c) = self.dims(*a);
                let mut ga = vec![0.0; r * c];
                for (o, &i) in indices.iter().enumerate() {
                    for k in 0..c {
                        ga[i * c + k] += g[o * c + k];
                    }
                }
                acc(*a, ga);
            }
            Op::Slice(a, start) => {
                let mut ga = vec![0.0; self.values(*a).len()];
                ga[*start..*start + g.len()].copy_from_slice(g);
                acc(*a, ga);
            }
            Op::Cols(a, start) => {
                let (r, c) = self.dims(*a);
                let len = node.value.shape[1];
                let mut ga = vec![0.0; r * c];
                for i in 0..r {
                    ga[i * c + start..i * c + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                acc(*a, ga);
            }
            Op::Reshape(a) => acc(*a, g.to_vec()),
            Op::Tanh(a) => acc(*a, g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect()),
            Op::Relu(a) => {
                let x = self.values(*a);
                acc(*a, g.iter().zip(x).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect());
            }
            Op::Sigmoid(a) => acc(*a, g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect()),
            Op::Sqrt(a) => acc(*a, g.iter().zip(y).map(|(g, y)| 0.5 * g / y).collect()),
            Op::Softmax(a, axis) => {
                let (r, c) = self.dims(*a);
                let mut ga = vec![0.0; r * c];
                let (outer, inner) = if *axis == 1 { (r, c) } else { (c, r) };
                let idx = |o: usize, i: usize| if *axis == 1 { o * c + i } else { i * c + o };
                for o in 0..outer {
                    let dot: f64 = (0..inner).map(|i| g[idx(o, i)] * y[idx(o, i)]).sum();
                    for i in 0..inner {
                        ga[idx(o, i)] = y[idx(o, i)] * (g[idx(o, i)] - dot);
                    }
                }
                acc(*a, ga);
            }
            Op::SignSt(a) => acc(*a, g.to_vec()),
            Op::HardSelectSt { probs, values, .. } => {
                let (m, d) = self.dims(*values);
                let (p, v) = (self.values(*probs), self.values(*values));
                let gp = (0..m).map(|i| (0..d).map(|k| g[k] * v[i * d + k]).sum()).collect();
                let gv = (0..m).flat_map(|i| g.iter().map(move |gk| p[i] * gk)).collect();
                acc(*probs, gp);
                acc(*values, gv);
            }
            Op::WeightedSetMean(mat, weights) => {
                let (m, d) = self.dims(*mat);
                let (mv, wv) = (self.values(*mat), self.values(*weights));
                let inv = 1.0 / m as f64;
                let gm = (0..m).flat_map(|i| g.iter().map(move |gk| gk * wv[i] * inv)).collect();
                let gw = (0..m).map(|i| (0..d).map(|k| g[k] * mv[i * d + k]).sum::<f64>() * inv).collect();
                acc(*mat, gm);
                acc(*weights, gw);
            }
            Op::Bce(logits, labels) => {
                let z = self.values(*logits);
                let n = z.len() as f64;
                acc(*logits, z.iter().zip(labels).map(|(&z, &y)| -g[0] * y * stable_sigmoid(-y * z) / n).collect());
            }
        }
    }
}
