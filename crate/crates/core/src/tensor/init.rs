//! Kaiming-uniform initialisation.

use super::{Rng, Tensor};

/// I.i.d. uniform on `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]`: the ReLU gain
/// `sqrt(2)` times the unit-variance uniform bound `sqrt(3 / fan_in)`.
pub fn kaiming_uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut Rng) -> Tensor {
    assert!(fan_in >= 1, "fan_in must be >= 1");
    let bound = (6.0 / fan_in as f64).sqrt();
    let values = (0..rows * cols).map(|_| rng.uniform_range(-bound, bound)).collect();
    Tensor { shape: vec![rows, cols], values, requires_grad: true, grad: None }
}
