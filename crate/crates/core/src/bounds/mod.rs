//! Generalization certificates for PAC-Bayes, sample compression and hybrid
//! hypernetworks.
//!
//! Every probability is carried as a natural logarithm. Certificates built on
//! the kl comparator are inverted with [`kl_inverse`]; the binary-loss sample
//! compression certificate uses [`binomial_tail_inverse`].

mod binomial;
mod corollaries;
mod kl;
mod trainset;

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binomial::{binomial_tail_inverse, log_binomial};
pub use corollaries::{bound_catoni, bound_linear_subgaussian, gaussian_kl, renyi_divergence_gaussian};
pub use kl::{bernoulli_kl, kl_inverse};
pub use trainset::{compare_trainset_bounds, uniform_grid, TrainsetComparison};

/// Absolute tolerance on the argument for every bisection.
pub const BISECTION_TOL: f64 = 1e-9;
/// Hard iteration cap for every bisection.
pub const BISECTION_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("invalid {name} = {value}: {msg}")]
    Domain { name: String, value: f64, msg: String },
}

impl BoundError {
    pub(crate) fn domain(name: &str, value: f64, msg: &str) -> Self {
        BoundError::Domain { name: name.to_string(), value, msg: msg.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoundKind {
    Pb,
    SchBinary,
    SchReal,
    Pbsch,
    PbschDisintegrated,
    Catoni,
    Linear,
}

impl BoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::Pb => "PB",
            BoundKind::SchBinary => "SCH_BINARY",
            BoundKind::SchReal => "SCH_REAL",
            BoundKind::Pbsch => "PBSCH",
            BoundKind::PbschDisintegrated => "PBSCH_DISINTEGRATED",
            BoundKind::Catoni => "CATONI",
            BoundKind::Linear => "LINEAR",
        }
    }
}

impl std::fmt::Display for BoundKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything a certificate needs to know about one task's bottleneck.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundBudget {
    pub m_prime: u64,
    pub c: u64,
    pub b: u64,
    pub delta: f64,
    /// Empirical loss on the complement of the compression set.
    pub emp_loss: f64,
    pub mu_norm_sq: f64,
    /// `ln P_J(j)`; [`BoundBudget::new`] sets the uniform prior `-ln C(m', c)`.
    pub log_prior_j: f64,
}

impl BoundBudget {
    pub fn new(m_prime: u64, c: u64, b: u64, delta: f64, emp_loss: f64, mu_norm_sq: f64) -> Result<Self, BoundError> {
        if c >= m_prime {
            return Err(BoundError::domain("c", c as f64, "must be smaller than m_prime"));
        }
        let budget = BoundBudget {
            m_prime,
            c,
            b,
            delta,
            emp_loss,
            mu_norm_sq,
            log_prior_j: -log_binomial(m_prime, c)?,
        };
        budget.validate()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<(), BoundError> {
        if self.c >= self.m_prime {
            return Err(BoundError::domain("c", self.c as f64, "must be smaller than m_prime"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(BoundError::domain("delta", self.delta, "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.emp_loss) {
            return Err(BoundError::domain("emp_loss", self.emp_loss, "must lie in [0, 1]"));
        }
        if !(self.mu_norm_sq >= 0.0) || !self.mu_norm_sq.is_finite() {
            return Err(BoundError::domain("mu_norm_sq", self.mu_norm_sq, "must be finite and >= 0"));
        }
        if !(self.log_prior_j <= 0.0) {
            return Err(BoundError::domain("log_prior_j", self.log_prior_j, "must be <= 0"));
        }
        Ok(())
    }

    /// Size of the complement set, `m' - c`.
    pub fn n_complement(&self) -> u64 {
        self.m_prime - self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownTerm {
    pub label: String,
    /// Contribution to the budget numerator, in nats.
    pub nats: f64,
    /// Certificate value once this and all earlier terms are included.
    pub cumulative_tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: BoundKind,
    pub tau_star: f64,
    pub delta: f64,
    pub breakdown: Vec<BreakdownTerm>,
}

pub const TERM_EMPIRICAL: &str = "empirical";
pub const TERM_CONFIDENCE: &str = "confidence";
pub const TERM_MESSAGE: &str = "message";
pub const TERM_COMPRESSION: &str = "compression";

/// `ln 2 + ln(sqrt(n)) + ln(1/delta)`.
fn kl_confidence_nats(n: u64, delta: f64) -> f64 {
    LN_2 + 0.5 * (n as f64).ln() - delta.ln()
}

/// Builds a certificate from ordered budget terms, inverting the cumulative
/// sum after each one. `invert` maps a cumulative nats total to a risk bound.
fn cumulative_certificate(
    kind: BoundKind,
    delta: f64,
    floor: f64,
    terms: &[(&str, f64)],
    invert: impl Fn(f64) -> Result<f64, BoundError>,
) -> Result<Certificate, BoundError> {
    let mut breakdown = Vec::with_capacity(terms.len() + 1);
    let mut tau = floor;
    breakdown.push(BreakdownTerm { label: TERM_EMPIRICAL.to_string(), nats: 0.0, cumulative_tau: tau });
    let mut cum = 0.0;
    for &(label, nats) in terms {
        cum += nats;
        tau = tau.max(invert(cum)?);
        breakdown.push(BreakdownTerm { label: label.to_string(), nats, cumulative_tau: tau });
    }
    Ok(Certificate { kind, tau_star: tau, delta, breakdown })
}

fn kl_certificate(kind: BoundKind, budget: &BoundBudget, n: u64, terms: &[(&str, f64)]) -> Result<Certificate, BoundError> {
    let q = budget.emp_loss;
    let nf = n as f64;
    cumulative_certificate(kind, budget.delta, q, terms, |cum| kl_inverse(q, cum / nf))
}

/// PAC-Bayes certificate on the Gaussian-posterior expected loss.
///
/// Budget `(|mu|^2/2 + ln(2 sqrt(m') / delta)) / m'`. Any `c` on the budget is
/// ignored; the encoder sees no compression set.
pub fn bound_pb(budget: &BoundBudget) -> Result<Certificate, BoundError> {
    budget.validate()?;
    let n = budget.m_prime;
    kl_certificate(
        BoundKind::Pb,
        budget,
        n,
        &[(TERM_CONFIDENCE, kl_confidence_nats(n, budget.delta)), (TERM_MESSAGE, 0.5 * budget.mu_norm_sq)],
    )
}

/// Binary-loss sample compression certificate from `errors` 0-1 mistakes on
/// the `m' - c` complement examples. `budget.emp_loss` is not read.
pub fn bound_sch_binary(budget: &BoundBudget, errors: u64) -> Result<Certificate, BoundError> {
    budget.validate()?;
    let n = budget.n_complement();
    if errors > n {
        return Err(BoundError::domain("errors", errors as f64, "must not exceed m_prime - c"));
    }
    let terms = [
        (TERM_CONFIDENCE, -budget.delta.ln()),
        (TERM_MESSAGE, budget.b as f64 * LN_2),
        (TERM_COMPRESSION, -budget.log_prior_j),
    ];
    let floor = errors as f64 / n as f64;
    cumulative_certificate(BoundKind::SchBinary, budget.delta, floor, &terms, |cum| {
        binomial_tail_inverse(n, errors, -cum)
    })
}

/// Real-valued-loss sample compression certificate with the kl comparator.
pub fn bound_sch_real(budget: &BoundBudget) -> Result<Certificate, BoundError> {
    budget.validate()?;
    let n = budget.n_complement();
    kl_certificate(
        BoundKind::SchReal,
        budget,
        n,
        &[
            (TERM_CONFIDENCE, kl_confidence_nats(n, budget.delta)),
            (TERM_MESSAGE, budget.b as f64 * LN_2),
            (TERM_COMPRESSION, -budget.log_prior_j),
        ],
    )
}

/// PAC-Bayes sample compression certificate on the message-expected loss.
pub fn bound_pbsch(budget: &BoundBudget) -> Result<Certificate, BoundError> {
    budget.validate()?;
    let n = budget.n_complement();
    kl_certificate(
        BoundKind::Pbsch,
        budget,
        n,
        &[
            (TERM_CONFIDENCE, kl_confidence_nats(n, budget.delta)),
            (TERM_MESSAGE, 0.5 * budget.mu_norm_sq),
            (TERM_COMPRESSION, -budget.log_prior_j),
        ],
    )
}

/// Disintegrated PAC-Bayes sample compression certificate (Rényi order 2) for
/// one message drawn from the posterior.
pub fn bound_pbsch_disintegrated(budget: &BoundBudget) -> Result<Certificate, BoundError> {
    budget.validate()?;
    let n = budget.n_complement();
    let confidence = 16f64.ln() + 0.5 * (n as f64).ln() - 3.0 * budget.delta.ln();
    kl_certificate(
        BoundKind::PbschDisintegrated,
        budget,
        n,
        &[
            (TERM_CONFIDENCE, confidence),
            (TERM_MESSAGE, budget.mu_norm_sq),
            (TERM_COMPRESSION, -budget.log_prior_j),
        ],
    )
}
