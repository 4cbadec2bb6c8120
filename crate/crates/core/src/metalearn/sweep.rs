//! Grid search over architecture sizes and learning rates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{meta_train, TrainProtocol, TrainingLog};
use crate::hypernet::{Architecture, HypernetConfig};
use crate::tasks::MetaTrainSet;
use crate::tensor::{Rng, StreamDomain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub architectures: Vec<Architecture>,
    pub learning_rates: Vec<f64>,
    pub mlp1: Vec<Vec<usize>>,
    pub mlp2: Vec<Vec<usize>>,
    pub mlp3: Vec<Vec<usize>>,
    pub c: Vec<usize>,
    pub b: Vec<usize>,
}

impl SweepGrid {
    /// The full published grid for one architecture.
    pub fn published(architecture: Architecture) -> Self {
        SweepGrid {
            architectures: vec![architecture],
            learning_rates: vec![1e-3, 1e-4],
            mlp1: vec![vec![200, 200], vec![500, 500]],
            mlp2: vec![vec![100], vec![200]],
            mlp3: vec![vec![100], vec![200, 200]],
            c: vec![0, 1, 2, 4, 6, 8],
            b: vec![0, 1, 2, 4, 8, 16, 32, 64, 128],
        }
    }

    /// Every combination, in a fixed nested order, with `base` supplying
    /// the fields the grid does not vary.
    pub fn points(&self, base: &HypernetConfig) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &architecture in &self.architectures {
            for &lr in &self.learning_rates {
                for mlp1 in &self.mlp1 {
                    for mlp2 in &self.mlp2 {
                        for mlp3 in &self.mlp3 {
                            for &c in &self.c {
                                for &b in &self.b {
                                    let config = HypernetConfig {
                                        architecture,
                                        c,
                                        b,
                                        mlp1: mlp1.clone(),
                                        mlp2: mlp2.clone(),
                                        mlp3: mlp3.clone(),
                                        ..base.clone()
                                    };
                                    out.push(SweepPoint { index: out.len(), learning_rate: lr, config });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub index: usize,
    pub learning_rate: f64,
    pub config: HypernetConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub point: SweepPoint,
    /// The training log, or why training failed.
    pub log: Result<TrainingLog, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    /// One entry per valid grid point, in grid order.
    pub results: Vec<SweepResult>,
    /// Invalid combinations and the reason each was rejected.
    pub skipped: Vec<(SweepPoint, String)>,
    /// Grid index of the selected point.
    pub best: Option<usize>,
}

/// Trains every valid point (in parallel, each on its own derived seed) and
/// selects the lowest validation error, preferring smaller `c`, then `b`.
pub fn sweep(
    grid: &SweepGrid,
    base: &HypernetConfig,
    protocol: &TrainProtocol,
    data: &MetaTrainSet,
    master_seed: u64,
) -> SweepOutcome {
    let mut valid = Vec::new();
    let mut skipped = Vec::new();
    for p in grid.points(base) {
        match p.config.validate() {
            Ok(()) => valid.push(p),
            Err(e) => skipped.push((p, e.to_string())),
        }
    }
    let results: Vec<SweepResult> = valid
        .into_par_iter()
        .map(|point| {
            let proto = TrainProtocol { learning_rate: point.learning_rate, ..protocol.clone() };
            let seed = Rng::derive_seed(master_seed, StreamDomain::Sweep, point.index as u64);
            let log = meta_train(data, &point.config, &proto, seed).map(|(_, log)| log).map_err(|e| format!("failed: {e}"));
            SweepResult { point, log }
        })
        .collect();
    let best = results
        .iter()
        .filter_map(|r| r.log.as_ref().ok().map(|l| (l.best_val_error, r.point.config.c, r.point.config.b, r.point.index)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).then(a.3.cmp(&b.3)))
        .map(|t| t.3);
    SweepOutcome { results, skipped, best }
}
