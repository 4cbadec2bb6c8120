//! Per-task certificates for a trained hypernetwork.
//!
//! The whole test task `S'` goes through the bottleneck. Losses that enter a
//! certificate are measured only on the complement of the distinct selected
//! indices, and the certified predictor is rebuilt from those distinct rows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fixed_split, query_error, MetaError};
use crate::bounds::{
    bound_pb, bound_pbsch, bound_pbsch_disintegrated, bound_sch_binary, bound_sch_real, BoundBudget, Certificate,
};
use crate::hypernet::{compression_rows, downstream_logits, Architecture, Hypernet, Noise};
use crate::tasks::{MetaTestSet, TaskDataset};
use crate::tensor::{linear_loss, predict_label, sigmoid, zero_one_loss, Rng, StreamDomain, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "zero_one")]
    ZeroOne,
    #[serde(rename = "linear")]
    Linear,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::ZeroOne => "zero_one",
            LossKind::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Standard error of the mean; 0 for a single deterministic predictor.
    pub stderr: f64,
}

/// What a certificate is about: one fixed downstream predictor, or the
/// distribution of predictors decoded from `mu + eps`, `eps ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Deterministic { gamma: Vec<f64> },
    Gaussian { rows: Option<Tensor>, mu: Vec<f64> },
}

fn loss_of(gamma: &[f64], layer_sizes: &[usize], x: &Tensor, y: &[f64], kind: LossKind) -> Result<f64, MetaError> {
    let logits = downstream_logits(gamma, layer_sizes, x)?;
    Ok(match kind {
        LossKind::ZeroOne => {
            let preds: Vec<f64> = logits.iter().map(|&z| predict_label(z)).collect();
            zero_one_loss(&preds, y)?
        }
        LossKind::Linear => {
            let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
            linear_loss(&probs, y)?
        }
    })
}

fn mean_and_stderr(samples: &[f64]) -> McEstimate {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return McEstimate { mean, stderr: 0.0 };
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    McEstimate { mean, stderr: (var / n).sqrt() }
}

/// Mean loss on `(x, y)` over `n_mc` predictors decoded from `mu + eps`.
#[allow(clippy::too_many_arguments)]
pub fn mc_expected_loss(
    net: &Hypernet,
    rows: Option<&Tensor>,
    mu: &[f64],
    x: &Tensor,
    y: &[f64],
    n_mc: usize,
    rng: &mut Rng,
    kind: LossKind,
) -> Result<McEstimate, MetaError> {
    if n_mc == 0 {
        return Err(MetaError::Protocol("n_mc must be >= 1".into()));
    }
    let layer_sizes = net.config.layer_sizes();
    let mut samples = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let msg: Vec<f64> = mu.iter().map(|m| m + rng.normal()).collect();
        let gamma = net.reconstruct_values(rows, Some(&msg))?;
        samples.push(loss_of(&gamma, &layer_sizes, x, y, kind)?);
    }
    Ok(mean_and_stderr(&samples))
}

/// Risk of `predictor` on `(x, y)`; Gaussian predictors are averaged over
/// `n_mc` draws.
pub fn predictor_risk(
    net: &Hypernet,
    predictor: &Predictor,
    x: &Tensor,
    y: &[f64],
    kind: LossKind,
    n_mc: usize,
    rng: &mut Rng,
) -> Result<McEstimate, MetaError> {
    match predictor {
        Predictor::Deterministic { gamma } => {
            Ok(McEstimate { mean: loss_of(gamma, &net.config.layer_sizes(), x, y, kind)?, stderr: 0.0 })
        }
        Predictor::Gaussian { rows, mu } => mc_expected_loss(net, rows.as_ref(), mu, x, y, n_mc, rng, kind),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedBound {
    pub certificate: Certificate,
    /// Loss the certificate bounds, and its empirical value on the complement.
    pub loss: LossKind,
    pub emp_loss: f64,
    pub mc_stderr: Option<f64>,
    /// Index into [`CertifiedTask::predictors`].
    pub predictor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationRow {
    pub task_id: u64,
    pub architecture: Architecture,
    pub m_prime: usize,
    pub c_effective: usize,
    pub b: usize,
    /// Complement losses of the noise-free predictor.
    pub emp_complement_loss_01: f64,
    pub emp_complement_loss_linear: f64,
    pub test_query_error: f64,
    pub bounds: Vec<CertifiedBound>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedTask {
    pub row: CertificationRow,
    pub predictors: Vec<Predictor>,
    /// Distinct compression indices into the task.
    pub compression_set: Vec<usize>,
}

/// Certificates for one held-out task. Randomness comes from the task's own
/// `Certify` stream, so the result is independent of scheduling.
pub fn certify_task(
    net: &Hypernet,
    task: &TaskDataset,
    delta: f64,
    n_mc: usize,
    support_size: usize,
    master_seed: u64,
) -> Result<CertifiedTask, MetaError> {
    let cfg = &net.config;
    let m = task.len();
    if m <= cfg.c {
        return Err(MetaError::Certify(format!("task {} has {m} examples, needs more than c = {}", task.id, cfg.c)));
    }
    let mut rng = Rng::stream(master_seed, StreamDomain::Certify, task.id);
    let art = net.infer(&task.features, &task.labels, Noise::Zero)?;
    let j = art.distinct_indices();
    let complement: Vec<usize> = (0..m).filter(|i| j.binary_search(i).is_err()).collect();
    let (cx, cy) = task.subset(&complement);
    let rows = (!j.is_empty()).then(|| compression_rows(&task.features, &task.labels, &j));
    let layer_sizes = cfg.layer_sizes();
    let (m_u, c_u, b_u) = (m as u64, j.len() as u64, cfg.b as u64);

    let message = art.binary_message.clone().or_else(|| art.gaussian_mean.clone());
    let gamma0 = net.reconstruct_values(rows.as_ref(), message.as_deref())?;
    let emp01 = loss_of(&gamma0, &layer_sizes, &cx, &cy, LossKind::ZeroOne)?;
    let emp_lin = loss_of(&gamma0, &layer_sizes, &cx, &cy, LossKind::Linear)?;

    let mut predictors = Vec::new();
    let mut bounds = Vec::new();
    match cfg.architecture {
        Architecture::SchMinus | Architecture::SchPlus => {
            predictors.push(Predictor::Deterministic { gamma: gamma0.clone() });
            let errors = (emp01 * complement.len() as f64).round() as u64;
            let bin = BoundBudget::new(m_u, c_u, b_u, delta, emp01, 0.0)?;
            bounds.push(CertifiedBound {
                certificate: bound_sch_binary(&bin, errors)?,
                loss: LossKind::ZeroOne,
                emp_loss: emp01,
                mc_stderr: None,
                predictor: 0,
            });
            let real = BoundBudget::new(m_u, c_u, b_u, delta, emp_lin, 0.0)?;
            bounds.push(CertifiedBound {
                certificate: bound_sch_real(&real)?,
                loss: LossKind::Linear,
                emp_loss: emp_lin,
                mc_stderr: None,
                predictor: 0,
            });
        }
        Architecture::Pbh | Architecture::PbSch => {
            let mu = art.gaussian_mean.clone().expect("gaussian architecture has a mean");
            let mu_norm_sq: f64 = mu.iter().map(|v| v * v).sum();
            let est = mc_expected_loss(net, rows.as_ref(), &mu, &cx, &cy, n_mc, &mut rng, LossKind::ZeroOne)?;
            predictors.push(Predictor::Gaussian { rows: rows.clone(), mu: mu.clone() });
            let budget = BoundBudget::new(m_u, c_u, b_u, delta, est.mean, mu_norm_sq)?;
            let certificate = if cfg.architecture == Architecture::Pbh { bound_pb(&budget)? } else { bound_pbsch(&budget)? };
            bounds.push(CertifiedBound {
                certificate,
                loss: LossKind::ZeroOne,
                emp_loss: est.mean,
                mc_stderr: Some(est.stderr),
                predictor: 0,
            });
            if cfg.architecture == Architecture::PbSch {
                let msg: Vec<f64> = mu.iter().map(|v| v + rng.normal()).collect();
                let gamma_star = net.reconstruct_values(rows.as_ref(), Some(&msg))?;
                let loss_star = loss_of(&gamma_star, &layer_sizes, &cx, &cy, LossKind::ZeroOne)?;
                predictors.push(Predictor::Deterministic { gamma: gamma_star });
                let budget = BoundBudget::new(m_u, c_u, b_u, delta, loss_star, mu_norm_sq)?;
                bounds.push(CertifiedBound {
                    certificate: bound_pbsch_disintegrated(&budget)?,
                    loss: LossKind::ZeroOne,
                    emp_loss: loss_star,
                    mc_stderr: None,
                    predictor: 1,
                });
            }
        }
    }

    let (support, query) = fixed_split(master_seed, task, support_size)?;
    let test_query_error = query_error(net, task, &support, &query)?;
    Ok(CertifiedTask {
        row: CertificationRow {
            task_id: task.id,
            architecture: cfg.architecture,
            m_prime: m,
            c_effective: j.len(),
            b: cfg.b,
            emp_complement_loss_01: emp01,
            emp_complement_loss_linear: emp_lin,
            test_query_error,
            bounds,
        },
        predictors,
        compression_set: j,
    })
}

/// Certifies every test task in parallel, refusing any task whose id the
/// hypernetwork was trained or selected on.
pub fn certify_all(
    net: &Hypernet,
    training_task_ids: &[u64],
    test: &MetaTestSet,
    delta: f64,
    n_mc: usize,
    support_size: usize,
    master_seed: u64,
) -> Result<Vec<CertifiedTask>, MetaError> {
    let seen: std::collections::HashSet<u64> = training_task_ids.iter().copied().collect();
    if let Some(t) = test.tasks.iter().find(|t| seen.contains(&t.id)) {
        return Err(MetaError::Certify(format!("task {} was used for training and cannot be certified", t.id)));
    }
    test.tasks.par_iter().map(|t| certify_task(net, t, delta, n_mc, support_size, master_seed)).collect()
}
