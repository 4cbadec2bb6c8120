//! Bernoulli relative entropy and its upper inversion.

use super::{BoundError, BISECTION_MAX_ITERS, BISECTION_TOL};

/// `kl(q, p) = q ln(q/p) + (1-q) ln((1-q)/(1-p))`, with `0 ln 0 = 0`.
///
/// `p` may only sit on the boundary of `[0, 1]` when it equals `q`.
pub fn bernoulli_kl(q: f64, p: f64) -> Result<f64, BoundError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(BoundError::domain("q", q, "must lie in [0, 1]"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(BoundError::domain("p", p, "must lie in [0, 1]"));
    }
    if q == p {
        return Ok(0.0);
    }
    if p == 0.0 || p == 1.0 {
        return Err(BoundError::domain("p", p, "must lie in (0, 1) when q != p"));
    }
    Ok(kl_unchecked(q, p))
}

/// Relative entropy for `q` in `[0,1]` and `p` strictly inside `(0,1)`.
pub(crate) fn kl_unchecked(q: f64, p: f64) -> f64 {
    let mut kl = 0.0;
    if q > 0.0 {
        kl += q * (q / p).ln();
    }
    if q < 1.0 {
        kl += (1.0 - q) * ((1.0 - q) / (1.0 - p)).ln();
    }
    kl.max(0.0)
}

/// `sup { tau in [q, 1] : kl(q, tau) <= budget }`.
///
/// Bisection runs over the fixed bracket `[0, 1]` on the predicate
/// `tau <= q || kl(q, tau) <= budget`, which is monotone in `q` and in `budget`,
/// so the result is exactly monotone in both arguments. The upper end of the
/// final bracket is returned, so the value never undershoots the supremum.
pub fn kl_inverse(q: f64, budget: f64) -> Result<f64, BoundError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(BoundError::domain("q", q, "must lie in [0, 1]"));
    }
    if budget.is_nan() || budget < 0.0 {
        return Err(BoundError::domain("budget", budget, "must be >= 0"));
    }
    if budget == 0.0 {
        return Ok(q);
    }
    if q == 1.0 || budget == f64::INFINITY {
        return Ok(1.0);
    }
    let feasible = |tau: f64| tau <= q || kl_unchecked(q, tau) <= budget;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..BISECTION_MAX_ITERS {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi.max(q))
}
