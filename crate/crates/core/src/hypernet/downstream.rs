//! The downstream predictor `h_gamma` whose weights the hypernetwork emits.
//!
//! `gamma` packs each layer as its weight matrix `fan_in x fan_out` in
//! row-major order followed by its bias of length `fan_out`, first layer
//! first. Hidden layers use ReLU; the single output is a logit.

use crate::tensor::{Graph, NodeId, Tensor, TensorError};

/// `[d, hidden..., 1]`.
pub fn downstream_layer_sizes(input_dim: usize, hidden: &[usize]) -> Vec<usize> {
    let mut sizes = vec![input_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    sizes
}

/// Length of `gamma` for the given layer sizes.
pub fn gamma_len(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

/// Logits `m x 1` for the rows of `x`, differentiable in `gamma`.
pub fn downstream_forward(g: &mut Graph, gamma: NodeId, layer_sizes: &[usize], x: NodeId) -> Result<NodeId, TensorError> {
    let expected = gamma_len(layer_sizes);
    let got = g.values(gamma).len();
    if got != expected {
        return Err(TensorError::Shape { op: "downstream_forward", detail: format!("gamma has {got} entries, layers need {expected}") });
    }
    let mut h = x;
    let mut offset = 0;
    let last = layer_sizes.len() - 2;
    for (i, w) in layer_sizes.windows(2).enumerate() {
        let (fi, fo) = (w[0], w[1]);
        let flat_w = g.slice(gamma, offset, fi * fo)?;
        let weight = g.reshape(flat_w, fi, fo)?;
        let bias = g.slice(gamma, offset + fi * fo, fo)?;
        offset += (fi + 1) * fo;
        let z = g.matmul(h, weight)?;
        h = g.add_bias(z, bias)?;
        if i < last {
            h = g.relu(h);
        }
    }
    Ok(h)
}

/// Non-differentiable evaluation of [`downstream_forward`].
pub fn downstream_logits(gamma: &[f64], layer_sizes: &[usize], x: &Tensor) -> Result<Vec<f64>, TensorError> {
    let mut g = Graph::new();
    let gm = g.constant(1, gamma.len(), gamma.to_vec())?;
    let xn = g.constant(x.rows(), x.cols(), x.values.clone())?;
    let out = downstream_forward(&mut g, gm, layer_sizes, xn)?;
    Ok(g.values(out).to_vec())
}
