//! Closed-form bounds that need no inversion, and the Gaussian divergences
//! that feed the message cost.

use super::BoundError;

/// Catoni-comparator bound on the (message-expected) true loss.
///
/// `n_eff` is `m - max_j |j|` for the continuous-message form, or `m - |j|`
/// for the discrete one. The result is clamped to `[0, 1]`.
pub fn bound_catoni(
    c_param: f64,
    exp_emp_loss: f64,
    kl_msg: f64,
    log_prior_j: f64,
    delta: f64,
    n_eff: u64,
) -> Result<f64, BoundError> {
    if !(c_param > 0.0) || !c_param.is_finite() {
        return Err(BoundError::domain("C", c_param, "must be > 0"));
    }
    check_common(kl_msg, log_prior_j, delta, n_eff)?;
    let exponent = -c_param * exp_emp_loss - (kl_msg - (log_prior_j + delta.ln())) / n_eff as f64;
    let value = (-exponent.exp_m1()) / (-(-c_param).exp_m1());
    Ok(value.clamp(0.0, 1.0))
}

/// Linear-comparator bound for a sub-Gaussian loss with variance proxy
/// `sigma_sq`. With a point-mass prior on a single compression set, the
/// log-expectation term is exactly `n_minus_j * lambda^2 * sigma_sq / 2`.
///
/// Not clamped: the loss need not live in `[0, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn bound_linear_subgaussian(
    lambda: f64,
    sigma_sq: f64,
    emp_loss: f64,
    kl_msg: f64,
    log_prior_j: f64,
    delta: f64,
    n_eff: u64,
    n_minus_j: u64,
) -> Result<f64, BoundError> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(BoundError::domain("lambda", lambda, "must be > 0"));
    }
    if !(sigma_sq >= 0.0) {
        return Err(BoundError::domain("sigma_sq", sigma_sq, "must be >= 0"));
    }
    check_common(kl_msg, log_prior_j, delta, n_eff)?;
    let log_mgf = n_minus_j as f64 * lambda * lambda * sigma_sq / 2.0;
    let complexity = kl_msg - log_prior_j - delta.ln() + log_mgf;
    Ok(emp_loss + complexity / (lambda * n_eff as f64))
}

fn check_common(kl_msg: f64, log_prior_j: f64, delta: f64, n_eff: u64) -> Result<(), BoundError> {
    if !(kl_msg >= 0.0) {
        return Err(BoundError::domain("kl_msg", kl_msg, "must be >= 0"));
    }
    if !(log_prior_j <= 0.0) {
        return Err(BoundError::domain("log_prior_j", log_prior_j, "must be <= 0"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(BoundError::domain("delta", delta, "must lie in (0, 1]"));
    }
    if n_eff == 0 {
        return Err(BoundError::domain("n_eff", 0.0, "must be >= 1"));
    }
    Ok(())
}

/// `KL(N(mu, I) || N(0, I)) = |mu|^2 / 2`.
pub fn gaussian_kl(mu: &[f64]) -> f64 {
    0.5 * mu.iter().map(|m| m * m).sum::<f64>()
}

/// Rényi divergence of order `alpha` between `N(mu, I)` and `N(0, I)`:
/// `alpha |mu|^2 / 2`.
pub fn renyi_divergence_gaussian(mu: &[f64], alpha: f64) -> Result<f64, BoundError> {
    if !(alpha > 1.0) {
        return Err(BoundError::domain("alpha", alpha, "must be > 1"));
    }
    Ok(alpha * gaussian_kl(mu))
}
