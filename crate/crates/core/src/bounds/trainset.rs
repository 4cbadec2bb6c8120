//! Train-set sample compression bound against its Pinsker-relaxed kl
//! counterpart, for a compression set of fixed size with zero loss on it.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::BoundError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainsetComparison {
    pub val_loss: f64,
    pub bound_squared: f64,
    pub bound_kl_pinsker: f64,
    /// `bound_squared - bound_kl_pinsker`; positive when the kl form is tighter.
    pub gap: f64,
}

/// Evaluates both bounds at every validation loss in `val_loss_grid`.
///
/// Values are not clamped to `[0, 1]`.
pub fn compare_trainset_bounds(
    m: u64,
    comp_size: u64,
    kl_val: f64,
    delta: f64,
    val_loss_grid: &[f64],
) -> Result<Vec<TrainsetComparison>, BoundError> {
    if comp_size >= m {
        return Err(BoundError::domain("comp_size", comp_size as f64, "must be smaller than m"));
    }
    if !(kl_val >= 0.0) || !kl_val.is_finite() {
        return Err(BoundError::domain("kl", kl_val, "must be finite and >= 0"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(BoundError::domain("delta", delta, "must lie in (0, 1]"));
    }
    let mf = m as f64;
    let n = (m - comp_size) as f64;
    let c = comp_size as f64;
    let log_conf = LN_2 + 0.5 * n.ln() - delta.ln();
    let sq_slack = ((kl_val + 2.0 * n * c / mf + log_conf) / (2.0 * n)).sqrt();
    let kl_slack = ((kl_val + log_conf) / n / 2.0).sqrt();
    val_loss_grid
        .iter()
        .map(|&v| {
            if !(0.0..=1.0).contains(&v) {
                return Err(BoundError::domain("val_loss", v, "must lie in [0, 1]"));
            }
            let bound_squared = n / mf * v + sq_slack;
            let bound_kl_pinsker = v + kl_slack;
            Ok(TrainsetComparison { val_loss: v, bound_squared, bound_kl_pinsker, gap: bound_squared - bound_kl_pinsker })
        })
        .collect()
}

/// `resolution` evenly spaced points on `[0, 1]`; a single point is `0`.
pub fn uniform_grid(resolution: usize) -> Vec<f64> {
    match resolution {
        0 => Vec::new(),
        1 => vec![0.0],
        r => (0..r).map(|i| i as f64 / (r - 1) as f64).collect(),
    }
}
