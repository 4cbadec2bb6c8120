//! The moons task environment and its on-disk format.
//!
//! A task is two interleaving half circles, randomly scaled, rotated about the
//! origin and then translated. Every task draws its parameters and noise from
//! its own stream, so a stored `(seed, rotation, center, scale)` regenerates it.

mod io;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_tasks, save_tasks, Manifest, ManifestEntry, MANIFEST_FILE};

use crate::tensor::{Rng, StreamDomain, Tensor};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid environment: {0}")]
    Spec(String),
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoonsEnvironmentSpec {
    pub n_train_tasks: usize,
    pub n_test_tasks: usize,
    pub examples_per_task: usize,
    pub noise_sigma: f64,
    /// Degrees, drawn uniformly from `[lo, hi)`.
    pub rotation_range: (f64, f64),
    /// Each coordinate of the center is uniform on this range.
    pub center_range: (f64, f64),
    pub scale_range: (f64, f64),
    /// Fraction of the training tasks held out for validation.
    pub validation_fraction: f64,
    pub master_seed: u64,
}

impl Default for MoonsEnvironmentSpec {
    fn default() -> Self {
        MoonsEnvironmentSpec {
            n_train_tasks: 300,
            n_test_tasks: 100,
            examples_per_task: 200,
            noise_sigma: 0.1,
            rotation_range: (0.0, 360.0),
            center_range: (-10.0, 10.0),
            scale_range: (0.2, 5.0),
            validation_fraction: 0.2,
            master_seed: 0,
        }
    }
}

impl MoonsEnvironmentSpec {
    pub fn validate(&self) -> Result<(), TaskError> {
        let bad = |m: &str| Err(TaskError::Spec(m.to_string()));
        if self.examples_per_task < 4 || self.examples_per_task % 2 != 0 {
            return bad("examples_per_task must be even and >= 4");
        }
        if !(self.scale_range.0 > 0.0 && self.scale_range.0 <= self.scale_range.1) {
            return bad("scale range must be positive and ordered");
        }
        if self.rotation_range.0 > self.rotation_range.1 || self.center_range.0 > self.center_range.1 {
            return bad("ranges must be ordered");
        }
        if !(self.noise_sigma >= 0.0) {
            return bad("noise_sigma must be >= 0");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    /// Training tasks kept for fitting after the validation hold-out.
    pub fn n_fit_tasks(&self) -> usize {
        self.n_train_tasks - self.n_validation_tasks()
    }

    pub fn n_validation_tasks(&self) -> usize {
        (self.n_train_tasks as f64 * self.validation_fraction).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskParams {
    pub rotation_deg: f64,
    pub center: [f64; 2],
    pub scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub id: u64,
    /// `m x d`.
    pub features: Tensor,
    /// Each in {-1, +1}.
    pub labels: Vec<f64>,
    pub params: Option<TaskParams>,
}

impl TaskDataset {
    pub fn new(id: u64, features: Tensor, labels: Vec<f64>, params: Option<TaskParams>) -> Result<Self, TaskError> {
        if features.rows() != labels.len() {
            return Err(TaskError::Spec(format!("{} feature rows for {} labels", features.rows(), labels.len())));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(TaskError::Spec(format!("label {bad} is not +1 or -1")));
        }
        Ok(TaskDataset { id, features, labels, params })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// The sub-dataset at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> (Tensor, Vec<f64>) {
        let d = self.dim();
        let mut v = Vec::with_capacity(indices.len() * d);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            v.extend_from_slice(self.features.row_slice(i));
            y.push(self.labels[i]);
        }
        (Tensor { shape: vec![indices.len(), d], values: v, requires_grad: false, grad: None }, y)
    }
}

/// Tasks the hypernetwork may be fitted and selected on.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaTrainSet {
    pub train: Vec<TaskDataset>,
    pub validation: Vec<TaskDataset>,
}

impl MetaTrainSet {
    pub fn task_ids(&self) -> Vec<u64> {
        self.train.iter().chain(&self.validation).map(|t| t.id).collect()
    }
}

/// Held-out tasks, only ever seen by certification.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaTestSet {
    pub tasks: Vec<TaskDataset>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaDataset {
    pub spec: MoonsEnvironmentSpec,
    pub train: MetaTrainSet,
    pub test: MetaTestSet,
}

/// Canonical point of the moon for `label` at angle `t`.
fn canonical(label: f64, t: f64) -> (f64, f64) {
    if label > 0.0 {
        (t.cos(), t.sin())
    } else {
        (1.0 - t.cos(), 0.5 - t.sin())
    }
}

fn transform(p: (f64, f64), params: &TaskParams) -> [f64; 2] {
    let (s, c) = params.rotation_deg.to_radians().sin_cos();
    let (x, y) = (p.0 * params.scale, p.1 * params.scale);
    [c * x - s * y + params.center[0], s * x + c * y + params.center[1]]
}

fn sample_params(spec: &MoonsEnvironmentSpec, seed: u64, rng: &mut Rng) -> TaskParams {
    let rotation_deg = rng.uniform_range(spec.rotation_range.0, spec.rotation_range.1);
    let center = [
        rng.uniform_range(spec.center_range.0, spec.center_range.1),
        rng.uniform_range(spec.center_range.0, spec.center_range.1),
    ];
    let scale = rng.uniform_range(spec.scale_range.0, spec.scale_range.1);
    TaskParams { rotation_deg, center, scale, seed }
}

/// Draws the points of a task. Each class gets `n/2` points; on the grid
/// `t_i = pi i / (n/2 - 1)`, otherwise `t` is uniform on `[0, pi]`.
fn moons_points(params: &TaskParams, n: usize, sigma: f64, grid: bool, rng: &mut Rng) -> (Tensor, Vec<f64>) {
    let half = n / 2;
    let mut v = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for label in [1.0, -1.0] {
        for i in 0..half {
            let t = if grid {
                if half > 1 {
                    PI * i as f64 / (half - 1) as f64
                } else {
                    0.0
                }
            } else {
                PI * rng.uniform()
            };
            let (cx, cy) = canonical(label, t);
            let p = (cx + sigma * rng.normal(), cy + sigma * rng.normal());
            v.extend_from_slice(&transform(p, params));
            labels.push(label);
        }
    }
    (Tensor { shape: vec![2 * half, 2], values: v, requires_grad: false, grad: None }, labels)
}

/// One task from its own seed.
pub fn gen_moons_task(spec: &MoonsEnvironmentSpec, id: u64, task_seed: u64) -> TaskDataset {
    let mut rng = Rng::from_seed(task_seed);
    let params = sample_params(spec, task_seed, &mut rng);
    let (features, labels) = moons_points(&params, spec.examples_per_task, spec.noise_sigma, true, &mut rng);
    TaskDataset { id, features, labels, params: Some(params) }
}

/// A fresh i.i.d. sample of `n` points from the distribution of an existing
/// task, with `t` uniform rather than on a grid.
pub fn sample_task_distribution(spec: &MoonsEnvironmentSpec, params: &TaskParams, n: usize, rng: &mut Rng) -> (Tensor, Vec<f64>) {
    moons_points(params, n, spec.noise_sigma, false, rng)
}

/// Seed of task `id` under `master`.
pub fn task_seed(master: u64, id: u64) -> u64 {
    Rng::derive_seed(master, StreamDomain::Tasks, id)
}

/// Training ids `0..n_train` (the last `n_validation` are held out), test ids
/// `n_train..n_train + n_test`.
pub fn gen_meta_dataset(spec: &MoonsEnvironmentSpec) -> Result<MetaDataset, TaskError> {
    spec.validate()?;
    let gen = |id: u64| gen_moons_task(spec, id, task_seed(spec.master_seed, id));
    let n_fit = spec.n_fit_tasks() as u64;
    let n_train = spec.n_train_tasks as u64;
    let n_test = spec.n_test_tasks as u64;
    Ok(MetaDataset {
        spec: spec.clone(),
        train: MetaTrainSet { train: (0..n_fit).map(gen).collect(), validation: (n_fit..n_train).map(gen).collect() },
        test: MetaTestSet { tasks: (n_train..n_train + n_test).map(gen).collect() },
    })
}
