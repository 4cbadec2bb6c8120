//! Training surrogate and evaluation losses for ±1 labels.

use super::{shape_err, TensorError};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `+1` for non-negative logits.
pub fn predict_label(logit: f64) -> f64 {
    if logit >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

fn check_len(op: &'static str, a: usize, b: usize) -> Result<(), TensorError> {
    if a != b || a == 0 {
        return Err(shape_err(op, format!("{a} predictions for {b} labels")));
    }
    Ok(())
}

/// Mean of `ln(1 + exp(-y z))`.
pub fn binary_cross_entropy(logits: &[f64], labels: &[f64]) -> Result<f64, TensorError> {
    check_len("binary_cross_entropy", logits.len(), labels.len())?;
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let t = -y * z;
            if t > 0.0 {
                t + (-t).exp().ln_1p()
            } else {
                t.exp().ln_1p()
            }
        })
        .sum();
    Ok(total / logits.len() as f64)
}

/// Fraction of `predictions` that differ from `labels`.
pub fn zero_one_loss(predictions: &[f64], labels: &[f64]) -> Result<f64, TensorError> {
    check_len("zero_one_loss", predictions.len(), labels.len())?;
    let wrong = predictions.iter().zip(labels).filter(|(p, y)| p != y).count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Mean of `1 - p_correct`, where `probs` holds `P(y = +1)`.
pub fn linear_loss(probs: &[f64], labels: &[f64]) -> Result<f64, TensorError> {
    check_len("linear_loss", probs.len(), labels.len())?;
    let total: f64 = probs.iter().zip(labels).map(|(&p, &y)| if y > 0.0 { 1.0 - p } else { p }).sum();
    Ok((total / labels.len() as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn examples() {
        let y = [1.0, -1.0, 1.0];
        assert_eq!(zero_one_loss(&y, &y).unwrap(), 0.0);
        assert_abs_diff_eq!(binary_cross_entropy(&[0.0; 3], &y).unwrap(), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_eq!(linear_loss(&[1.0, 0.0, 1.0], &y).unwrap(), 0.0);
        assert_eq!(linear_loss(&[0.5; 3], &y).unwrap(), 0.5);
        assert_eq!(zero_one_loss(&[1.0, 1.0, 1.0], &y).unwrap(), 1.0 / 3.0);
        assert!(zero_one_loss(&[1.0], &y).is_err());
    }

    #[test]
    fn bce_is_stable() {
        let v = binary_cross_entropy(&[800.0, -800.0], &[1.0, -1.0]).unwrap();
        assert_eq!(v, 0.0);
        let v = binary_cross_entropy(&[-800.0], &[1.0]).unwrap();
        assert_eq!(v, 800.0);
    }
}
