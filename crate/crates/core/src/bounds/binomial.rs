//! Log binomial coefficients and the binomial tail inversion used by the
//! binary-loss sample compression certificate.

use super::{BoundError, BISECTION_MAX_ITERS, BISECTION_TOL};

/// Below this many factors `ln C(n, k)` is summed term by term; above it the
/// three log-gamma values are large enough that their cancellation is harmless.
const DIRECT_SUM_LIMIT: u64 = 10_000;

/// `ln C(n, k)`.
pub fn log_binomial(n: u64, k: u64) -> Result<f64, BoundError> {
    if k > n {
        return Err(BoundError::domain("k", k as f64, "must not exceed n"));
    }
    let k = k.min(n - k);
    if k <= DIRECT_SUM_LIMIT {
        let base = (n - k) as f64;
        let mut acc = 0.0;
        for i in 1..=k {
            acc += (1.0 + base / i as f64).ln();
        }
        return Ok(acc);
    }
    Ok(ln_gamma_large((n + 1) as f64) - ln_gamma_large((k + 1) as f64) - ln_gamma_large((n - k + 1) as f64))
}

/// Stirling series for `ln Γ(x)`; only called with `x > 10^4`, where the
/// truncation error is far below double precision.
fn ln_gamma_large(x: f64) -> f64 {
    const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
    (x - 0.5) * x.ln() - x + HALF_LN_TWO_PI + series
}

/// `ln P(Bin(n, r) <= k)` summed in log space. `r` must lie in `(0, 1)`.
fn log_cdf(log_coeffs: &[f64], n: u64, r: f64) -> f64 {
    let ln_r = r.ln();
    let ln_1mr = (-r).ln_1p();
    let mut terms: Vec<f64> = log_coeffs
        .iter()
        .enumerate()
        .map(|(i, lc)| lc + i as f64 * ln_r + (n - i as u64) as f64 * ln_1mr)
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    for t in terms.iter_mut() {
        *t = (*t - max).exp();
    }
    max + terms.iter().sum::<f64>().ln()
}

/// `sup { r in [0,1] : sum_{i=0}^{k} C(n,i) r^i (1-r)^(n-i) >= exp(log_delta_prime) }`.
///
/// The sum starts at `i = 0`. The CDF is decreasing in `r`, so the feasible
/// set is an interval `[0, r*]`; bisection over the fixed bracket returns its
/// upper end, making the result exactly monotone in `k` and `log_delta_prime`.
pub fn binomial_tail_inverse(n: u64, k: u64, log_delta_prime: f64) -> Result<f64, BoundError> {
    if k > n {
        return Err(BoundError::domain("k", k as f64, "must not exceed n"));
    }
    if log_delta_prime.is_nan() || log_delta_prime > 0.0 {
        return Err(BoundError::domain("log_delta_prime", log_delta_prime, "must be <= 0"));
    }
    if k == n {
        return Ok(1.0);
    }
    // C(n, i) for i = 0..=k by the multiplicative recurrence.
    let mut log_coeffs = Vec::with_capacity(k as usize + 1);
    let mut acc = 0.0;
    log_coeffs.push(0.0);
    for i in 1..=k {
        acc += ((n - i + 1) as f64 / i as f64).ln();
        log_coeffs.push(acc);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..BISECTION_MAX_ITERS {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if log_cdf(&log_coeffs, n, mid) >= log_delta_prime {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}
