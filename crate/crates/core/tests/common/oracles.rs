//! Independent reference implementations for the bound engine.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

pub fn big_binomial(n: u64, k: u64) -> BigUint {
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Natural log of a big integer, through its top 64 bits.
pub fn big_ln(x: &BigUint) -> f64 {
    let bits = x.bits();
    let shift = bits.saturating_sub(64);
    let top = (x >> shift).to_u64().unwrap() as f64;
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

pub fn ln_binomial_exact(n: u64, k: u64) -> f64 {
    big_ln(&big_binomial(n, k))
}

/// Exact `P(Bin(n, a / 2^bits) <= k) >= delta` in integer arithmetic.
fn cdf_at_least(n: u64, k: u64, a: &BigUint, bits: u64, delta: f64) -> bool {
    let one = BigUint::one() << bits;
    let b = &one - a;
    let mut sum = BigUint::zero();
    for i in 0..=k {
        sum += big_binomial(n, i) * a.pow(i as u32) * b.pow((n - i) as u32);
    }
    // delta = mant * 2^exp exactly.
    let (mant, exp) = decompose(delta);
    let lhs = sum << (if exp < 0 { (-exp) as u64 } else { 0 });
    let rhs = BigUint::from(mant) << (bits * n) << (if exp > 0 { exp as u64 } else { 0 });
    lhs >= rhs
}

fn decompose(x: f64) -> (u64, i64) {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    }
}

/// Binomial tail inversion by bisection on exact dyadic rationals.
pub fn binomial_tail_inverse_exact(n: u64, k: u64, delta: f64) -> f64 {
    if k == n {
        return 1.0;
    }
    const BITS: u64 = 40;
    let (mut lo, mut hi) = (BigUint::zero(), BigUint::one() << BITS);
    while &hi - &lo > BigUint::one() {
        let mid: BigUint = (&lo + &hi) >> 1;
        if cdf_at_least(n, k, &mid, BITS, delta) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi.to_f64().unwrap() / (1u64 << BITS) as f64
}

/// `kl(q || p)` written out independently of the library.
pub fn kl_ref(q: f64, p: f64) -> f64 {
    let a = if q == 0.0 { 0.0 } else { q * (q / p).ln() };
    let b = if q == 1.0 { 0.0 } else { (1.0 - q) * ((1.0 - q) / (1.0 - p)).ln() };
    a + b
}

/// Upper KL inverse by a coarse scan followed by bisection on the bracketing cell.
pub fn kl_inverse_ref(q: f64, budget: f64) -> f64 {
    if q >= 1.0 {
        return 1.0;
    }
    let cells = 4096;
    let mut lo = q;
    let mut hi = 1.0;
    for i in 1..=cells {
        let p = q + (1.0 - q) * i as f64 / cells as f64;
        if p >= 1.0 || kl_ref(q, p) > budget {
            hi = p;
            break;
        }
        lo = p;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid < 1.0 && kl_ref(q, mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
