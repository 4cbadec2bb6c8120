//! One CSV per task (`x1,...,xd,y`) plus `manifest.json`.
//!
//! Features are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MetaDataset, MetaTestSet, MetaTrainSet, MoonsEnvironmentSpec, TaskDataset, TaskError, TaskParams};
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: u64,
    pub split: Split,
    pub file: String,
    pub n_examples: usize,
    pub params: Option<TaskParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub spec: MoonsEnvironmentSpec,
    pub tasks: Vec<ManifestEntry>,
}

fn task_csv(task: &TaskDataset) -> String {
    let d = task.dim();
    let mut s = String::new();
    let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).chain(["y".to_string()]).collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for (i, &y) in task.labels.iter().enumerate() {
        for v in task.features.row_slice(i) {
            write!(s, "{v:.16e},").unwrap();
        }
        writeln!(s, "{}", if y > 0.0 { "1" } else { "-1" }).unwrap();
    }
    s
}

fn parse_csv(file: &str, text: &str) -> Result<(Tensor, Vec<f64>), TaskError> {
    let err = |line: usize, msg: String| TaskError::Parse { file: file.to_string(), line, msg };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let d = cols.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| err(1, "need at least one feature column".into()))?;
    let expected: Vec<String> = (1..=d).map(|i| format!("x{i}")).chain(["y".to_string()]).collect();
    if cols != expected {
        return Err(err(1, format!("header must be {}", expected.join(","))));
    }
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (n, line) in lines.enumerate() {
        let lineno = n + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d + 1 {
            return Err(err(lineno, format!("expected {} fields, found {}", d + 1, fields.len())));
        }
        for f in &fields[..d] {
            let v: f64 = f.parse().map_err(|_| err(lineno, format!("bad number {f:?}")))?;
            if !v.is_finite() {
                return Err(err(lineno, format!("non-finite feature {f:?}")));
            }
            values.push(v);
        }
        let y: f64 = fields[d].parse().map_err(|_| err(lineno, format!("bad label {:?}", fields[d])))?;
        if y != 1.0 && y != -1.0 {
            return Err(err(lineno, format!("label {} is not +1 or -1", fields[d])));
        }
        labels.push(y);
    }
    let m = labels.len();
    Ok((Tensor { shape: vec![m, d], values, requires_grad: false, grad: None }, labels))
}

/// Writes every task of `md` under `dir`, which must exist.
pub fn save_tasks(dir: &Path, md: &MetaDataset) -> Result<Manifest, TaskError> {
    let mut entries = Vec::new();
    let groups = [(Split::Train, &md.train.train), (Split::Validation, &md.train.validation), (Split::Test, &md.test.tasks)];
    for (split, tasks) in groups {
        for t in tasks {
            let file = format!("task_{:05}.csv", t.id);
            std::fs::write(dir.join(&file), task_csv(t))?;
            entries.push(ManifestEntry { id: t.id, split, file, n_examples: t.len(), params: t.params });
        }
    }
    let manifest = Manifest { format_version: MANIFEST_VERSION, spec: md.spec.clone(), tasks: entries };
    std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_tasks(dir: &Path) -> Result<MetaDataset, TaskError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| TaskError::Manifest(format!("cannot read {}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(TaskError::Manifest(format!("unsupported format_version {}", manifest.format_version)));
    }
    let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
    let mut seen = std::collections::HashSet::new();
    for e in &manifest.tasks {
        if !seen.insert(e.id) {
            return Err(TaskError::Manifest(format!("task id {} listed twice", e.id)));
        }
        let fpath = dir.join(&e.file);
        let text = std::fs::read_to_string(&fpath)
            .map_err(|err| TaskError::Manifest(format!("task {} file {}: {err}", e.id, fpath.display())))?;
        let (features, labels) = parse_csv(&e.file, &text)?;
        if labels.len() != e.n_examples {
            return Err(TaskError::Manifest(format!(
                "task {} has {} rows, manifest says {}",
                e.id,
                labels.len(),
                e.n_examples
            )));
        }
        let task = TaskDataset::new(e.id, features, labels, e.params)?;
        match e.split {
            Split::Train => train.push(task),
            Split::Validation => validation.push(task),
            Split::Test => test.push(task),
        }
    }
    Ok(MetaDataset { spec: manifest.spec, train: MetaTrainSet { train, validation }, test: MetaTestSet { tasks: test } })
}
