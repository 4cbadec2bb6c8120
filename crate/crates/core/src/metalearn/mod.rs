//! Episodic meta-training, certification of held-out tasks, and
//! hyperparameter sweeps.

mod certify;
mod report;
mod sweep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use certify::{
    certify_all, certify_task, mc_expected_loss, predictor_risk, CertificationRow, CertifiedBound, CertifiedTask, LossKind, McEstimate,
    Predictor,
};
pub use report::{certificates_csv, format_num, sweep_csv, CERTIFICATES_HEADER, SWEEP_HEADER};
pub use sweep::{sweep, SweepGrid, SweepOutcome, SweepPoint, SweepResult};

use crate::bounds::BoundError;
use crate::hypernet::{downstream_forward, Hypernet, HypernetConfig, HypernetError, Noise};
use crate::tasks::{MetaTrainSet, TaskDataset};
use crate::tensor::{predict_label, zero_one_loss, Adam, AdamState, Graph, Rng, StreamDomain, TensorError};

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("invalid protocol: {0}")]
    Protocol(String),
    #[error("training diverged at epoch {epoch}, task {task_id}: loss {loss}")]
    Divergence { epoch: usize, task_id: u64, loss: f64 },
    #[error("certification: {0}")]
    Certify(String),
    #[error(transparent)]
    Hypernet(#[from] HypernetError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainProtocol {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without a new best validation error before stopping.
    pub patience: usize,
    /// Support-set size alpha; the rest of each task is the query set.
    pub support_size: usize,
    /// Monte Carlo draws for expected-loss certificates.
    pub n_mc: usize,
}

impl Default for TrainProtocol {
    fn default() -> Self {
        TrainProtocol { learning_rate: 1e-3, max_epochs: 200, patience: 20, support_size: 100, n_mc: 100 }
    }
}

impl TrainProtocol {
    pub fn validate(&self, min_task_size: usize) -> Result<(), MetaError> {
        if self.support_size == 0 || self.support_size >= min_task_size {
            return Err(MetaError::Protocol(format!(
                "support_size {} must lie in [1, {min_task_size})",
                self.support_size
            )));
        }
        if self.max_epochs == 0 {
            return Err(MetaError::Protocol("max_epochs must be >= 1".into()));
        }
        if self.n_mc == 0 {
            return Err(MetaError::Protocol("n_mc must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(MetaError::Protocol("learning_rate must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Uniform split of a task into `alpha` support and `m - alpha` query indices.
pub fn split_support_query(task: &TaskDataset, alpha: usize, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>), MetaError> {
    let m = task.len();
    if alpha == 0 || alpha >= m {
        return Err(MetaError::Protocol(format!("support size {alpha} out of range for task of {m}")));
    }
    let perm = rng.permutation(m);
    let (s, q) = perm.split_at(alpha);
    Ok((s.to_vec(), q.to_vec()))
}

/// The fixed split used for validation and for the reported test error.
pub fn fixed_split(master_seed: u64, task: &TaskDataset, alpha: usize) -> Result<(Vec<usize>, Vec<usize>), MetaError> {
    split_support_query(task, alpha, &mut Rng::stream(master_seed, StreamDomain::TaskSplit, task.id))
}

/// 0-1 error on the query set of a noise-free pass over the support set.
pub fn query_error(net: &Hypernet, task: &TaskDataset, support: &[usize], query: &[usize]) -> Result<f64, MetaError> {
    let (sx, sy) = task.subset(support);
    let art = net.infer(&sx, &sy, Noise::Zero)?;
    let (qx, qy) = task.subset(query);
    let logits = crate::hypernet::downstream_logits(&art.gamma, &art.layer_sizes, &qx)?;
    let preds: Vec<f64> = logits.iter().map(|&z| predict_label(z)).collect();
    Ok(zero_one_loss(&preds, &qy)?)
}

pub fn validation_error(net: &Hypernet, tasks: &[TaskDataset], alpha: usize, master_seed: u64) -> Result<f64, MetaError> {
    let mut total = 0.0;
    for t in tasks {
        let (s, q) = fixed_split(master_seed, t, alpha)?;
        total += query_error(net, t, &s, &q)?;
    }
    Ok(total / tasks.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_error: f64,
}

impl TrainingLog {
    /// One line per epoch.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.epochs {
            s.push_str(&format!(
                "epoch={} train_loss={} val_error={}\n",
                e.epoch,
                format_num(e.train_loss),
                format_num(e.val_error)
            ));
        }
        s.push_str(&format!("best_epoch={} best_val_error={}\n", self.best_epoch, format_num(self.best_val_error)));
        s
    }
}

/// One gradient step on one task: split, forward on the support set,
/// logistic loss of the downstream predictor on the query set.
fn train_step(
    net: &mut Hypernet,
    adam: &Adam,
    state: &mut AdamState,
    task: &TaskDataset,
    alpha: usize,
    rng: &mut Rng,
) -> Result<f64, MetaError> {
    let (support, query) = split_support_query(task, alpha, rng)?;
    let (sx, sy) = task.subset(&support);
    let (qx, qy) = task.subset(&query);
    let mut g = Graph::new();
    let bound = net.bind(&mut g, true);
    let out = net.forward(&mut g, &bound, &sx, &sy, Noise::Sample(rng))?;
    let qn = g.constant(qx.rows(), qx.cols(), qx.values)?;
    let logits = downstream_forward(&mut g, out.gamma, &net.config.layer_sizes(), qn)?;
    let loss = g.bce(logits, &qy)?;
    let value = g.values(loss)[0];
    if !value.is_finite() {
        return Ok(value);
    }
    g.backward(loss)?;
    let grads = net.params.collect_grads(&g, &bound);
    let mut flat = net.params.flatten();
    adam.step(&mut flat, &grads, state);
    net.params.assign_flat(&flat);
    Ok(value)
}

/// Meta-trains a freshly initialised hypernetwork and returns the parameters
/// of the epoch with the lowest validation error.
pub fn meta_train(
    data: &MetaTrainSet,
    config: &HypernetConfig,
    protocol: &TrainProtocol,
    master_seed: u64,
) -> Result<(Hypernet, TrainingLog), MetaError> {
    if data.train.is_empty() || data.validation.is_empty() {
        return Err(MetaError::Protocol("need at least one training and one validation task".into()));
    }
    let min_size = data.train.iter().chain(&data.validation).map(|t| t.len()).min().unwrap();
    protocol.validate(min_size)?;
    let mut net = Hypernet::new(config.clone(), &mut Rng::stream(master_seed, StreamDomain::Init, 0))?;
    let adam = Adam::new(protocol.learning_rate);
    let mut state = AdamState::new(net.params.num_scalars());
    let mut best = (net.params.clone(), usize::MAX, f64::INFINITY);
    let mut epochs = Vec::new();
    for epoch in 0..protocol.max_epochs {
        let mut rng = Rng::stream(master_seed, StreamDomain::Training, epoch as u64);
        let order = rng.permutation(data.train.len());
        let mut total = 0.0;
        for &i in &order {
            let task = &data.train[i];
            let loss = train_step(&mut net, &adam, &mut state, task, protocol.support_size, &mut rng)?;
            if !loss.is_finite() {
                return Err(MetaError::Divergence { epoch, task_id: task.id, loss });
            }
            total += loss;
        }
        let val_error = validation_error(&net, &data.validation, protocol.support_size, master_seed)?;
        epochs.push(EpochLog { epoch, train_loss: total / order.len() as f64, val_error });
        if val_error < best.2 {
            best = (net.params.clone(), epoch, val_error);
        } else if epoch - best.1 >= protocol.patience {
            break;
        }
    }
    net.params = best.0;
    Ok((net, TrainingLog { epochs, best_epoch: best.1, best_val_error: best.2 }))
}
