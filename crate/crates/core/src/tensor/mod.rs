//! Dense reverse-mode automatic differentiation over 2-D `f64` arrays.

mod graph;
mod init;
mod loss;
mod optim;
mod rng;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use graph::{Graph, NodeId};
pub use init::kaiming_uniform;
pub use loss::{binary_cross_entropy, linear_loss, predict_label, sigmoid, zero_one_loss};
pub use optim::{Adam, AdamState};
pub use rng::{Rng, StreamDomain};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value in {op}")]
    NonFinite { op: &'static str },
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::Shape { op, detail: detail.into() }
}

/// A dense row-major array. Graph values are always 2-D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, TensorError> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(shape_err("tensor", format!("shape {shape:?} needs {n} values, got {}", values.len())));
        }
        Ok(Tensor { shape, values, requires_grad: false, grad: None })
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, TensorError> {
        Tensor::new(vec![rows, cols], values)
    }

    /// A `1 x n` row.
    pub fn row(values: Vec<f64>) -> Self {
        Tensor { shape: vec![1, values.len()], values, requires_grad: false, grad: None }
    }

    /// An `n x 1` column.
    pub fn column(values: Vec<f64>) -> Self {
        Tensor { shape: vec![values.len(), 1], values, requires_grad: false, grad: None }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1, 1], values: vec![v], requires_grad: false, grad: None }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { shape: vec![rows, cols], values: vec![0.0; rows * cols], requires_grad: false, grad: None }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    /// Rows of a 2-D tensor; a 1-D tensor is read as one row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => 1,
            _ => self.shape[0],
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1..].iter().product(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols() + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.values[r * c..(r + 1) * c]
    }

    pub fn item(&self) -> f64 {
        self.values[0]
    }
}
