//! Named parameter storage and the small networks assembled from it.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::HypernetError;
use crate::tensor::{kaiming_uniform, Graph, NodeId, Rng, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedParam {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Parameters in registration order; the order fixes the layout of the flat
/// vector seen by the optimiser.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<NamedParam>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub(crate) fn push(&mut self, name: String, rows: usize, cols: usize, values: Vec<f64>) -> usize {
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        assert_eq!(values.len(), rows * cols);
        self.index.insert(name.clone(), self.params.len());
        self.params.push(NamedParam { name, rows, cols, values });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&NamedParam> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut NamedParam> {
        self.index.get(name).map(|&i| &mut self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedParam> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut NamedParam> {
        self.params.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.values.iter().copied()).collect()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_scalars());
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.values.len();
            p.values.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    /// Pushes every parameter into `g` as a leaf, in store order.
    pub fn bind(&self, g: &mut Graph, requires_grad: bool) -> Vec<NodeId> {
        self.params
            .iter()
            .map(|p| {
                g.leaf(Tensor { shape: vec![p.rows, p.cols], values: p.values.clone(), requires_grad, grad: None })
            })
            .collect()
    }

    /// Gradients of bound parameters after `g.backward`, flattened in store
    /// order; parameters the loss does not reach get zeros.
    pub fn collect_grads(&self, g: &Graph, bound: &[NodeId]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for (p, &id) in self.params.iter().zip(bound) {
            match g.grad(id) {
                Some(gr) => out.extend_from_slice(gr),
                None => out.extend(std::iter::repeat_n(0.0, p.values.len())),
            }
        }
        out
    }

    /// Replaces every value with those of `other`, after checking the names
    /// and shapes agree.
    pub fn load_from(&mut self, other: &[NamedParam]) -> Result<(), HypernetError> {
        if other.len() != self.params.len() {
            return Err(HypernetError::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                self.params.len(),
                other.len()
            )));
        }
        for (mine, theirs) in self.params.iter_mut().zip(other) {
            if mine.name != theirs.name || mine.rows != theirs.rows || mine.cols != theirs.cols {
                return Err(HypernetError::Checkpoint(format!(
                    "parameter {} ({}x{}) does not match {} ({}x{})",
                    theirs.name, theirs.rows, theirs.cols, mine.name, mine.rows, mine.cols
                )));
            }
            if theirs.values.len() != mine.rows * mine.cols {
                return Err(HypernetError::Checkpoint(format!("parameter {} has the wrong length", theirs.name)));
            }
            mine.values.clone_from(&theirs.values);
        }
        Ok(())
    }

    pub fn params(&self) -> &[NamedParam] {
        &self.params
    }
}

/// Affine layer `h = x W + b` with `W: fan_in x fan_out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Dense {
    pub fn register(store: &mut ParamStore, prefix: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Dense {
        let w = kaiming_uniform(fan_in, fan_out, fan_in, rng).values;
        let w = store.push(format!("{prefix}.w"), fan_in, fan_out, w);
        let b = store.push(format!("{prefix}.b"), 1, fan_out, vec![0.0; fan_out]);
        Dense { w, b, fan_in, fan_out }
    }

    pub fn forward(&self, g: &mut Graph, bound: &[NodeId], x: NodeId) -> Result<NodeId, TensorError> {
        let h = g.matmul(x, bound[self.w])?;
        g.add_bias(h, bound[self.b])
    }
}

/// ReLU network; the last layer is linear unless `relu_output` is set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub relu_output: bool,
}

impl Mlp {
    /// `sizes` lists the input width, every hidden width and the output width.
    pub fn register(store: &mut ParamStore, prefix: &str, sizes: &[usize], relu_output: bool, rng: &mut Rng) -> Mlp {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::register(store, &format!("{prefix}.l{i}"), w[0], w[1], rng))
            .collect();
        Mlp { layers, relu_output }
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.last().map(|l| l.fan_out)
    }

    pub fn forward(&self, g: &mut Graph, bound: &[NodeId], x: NodeId) -> Result<NodeId, TensorError> {
        let mut h = x;
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, bound, h)?;
            if i < last || self.relu_output {
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

/// Permutation-invariant set encoder: a per-example network `g` followed by
/// a mean over examples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeepSet {
    pub net: Mlp,
    pub embed_dim: usize,
}

impl DeepSet {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: &[usize],
        embed_dim: usize,
        rng: &mut Rng,
    ) -> DeepSet {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(embed_dim);
        DeepSet { net: Mlp::register(store, prefix, &sizes, false, rng), embed_dim }
    }

    /// Binary labels: `z = (1/m) M^T y` with `M = g(X)`.
    pub fn embed_binary(&self, g: &mut Graph, bound: &[NodeId], x: NodeId, y: NodeId) -> Result<NodeId, TensorError> {
        let m = self.net.forward(g, bound, x)?;
        g.weighted_set_mean(m, y)
    }

    /// One-hot labels: `z = (1/m) [M, Y]^T 1`, of width `embed_dim + classes`.
    pub fn embed_multiclass(
        &self,
        g: &mut Graph,
        bound: &[NodeId],
        x: NodeId,
        onehot: NodeId,
    ) -> Result<NodeId, TensorError> {
        let m = self.net.forward(g, bound, x)?;
        let joined = g.concat(&[m, onehot], 1)?;
        let rows = g.shape(joined).0;
        let ones = g.constant(rows, 1, vec![1.0; rows])?;
        g.weighted_set_mean(joined, ones)
    }
}
