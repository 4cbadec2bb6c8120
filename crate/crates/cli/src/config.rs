//! `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hypercert::hypernet::{Architecture, HypernetConfig};
use hypercert::metalearn::{SweepGrid, TrainProtocol};
use hypercert::tasks::MoonsEnvironmentSpec;
use serde::Serialize;

use crate::CliError;

pub const KEYS: &[&str] = &[
    "seed",
    "output_dir",
    "delta",
    "n_train_tasks",
    "n_test_tasks",
    "examples_per_task",
    "noise_sigma",
    "rotation_min",
    "rotation_max",
    "center_min",
    "center_max",
    "scale_min",
    "scale_max",
    "validation_fraction",
    "architecture",
    "c",
    "b",
    "mlp1",
    "mlp2",
    "mlp3",
    "embed_dim",
    "key_dim",
    "learning_rate",
    "max_epochs",
    "patience",
    "support_size",
    "n_mc",
    "sweep_architectures",
    "sweep_learning_rates",
    "sweep_mlp1",
    "sweep_mlp2",
    "sweep_mlp3",
    "sweep_c",
    "sweep_b",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub delta: f64,
    pub environment: MoonsEnvironmentSpec,
    pub hypernet: HypernetConfig,
    pub protocol: TrainProtocol,
    pub sweep: SweepGrid,
}

fn config_err(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("line {line}: {msg}"))
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take<T>(&mut self, key: &str, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<T>, CliError> {
        match self.map.remove(key) {
            None => Ok(None),
            Some((line, raw)) => {
                parse(&raw).map(Some).ok_or_else(|| config_err(line, format!("`{key}` expects {what}, got `{raw}`")))
            }
        }
    }

    fn num<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<Option<T>, CliError> {
        self.take(key, |s| s.parse().ok(), what)
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Option<Vec<T>> {
    let s = s.trim();
    if s.is_empty() || s == "none" {
        return Some(Vec::new());
    }
    s.split(',').map(|p| p.trim().parse().ok()).collect()
}

fn parse_list_of_lists(s: &str) -> Option<Vec<Vec<usize>>> {
    s.split(';').map(parse_list).collect()
}

fn parse_architectures(s: &str) -> Option<Vec<Architecture>> {
    s.split(',').map(|p| Architecture::parse(p.trim())).collect()
}

impl RunConfig {
    /// Parses `text`; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig, CliError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) =
                content.split_once('=').ok_or_else(|| config_err(line, format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(config_err(line, format!("unknown key `{key}`")));
            }
            if map.insert(key.to_string(), (line, value.trim().to_string())).is_some() {
                return Err(config_err(line, format!("duplicate key `{key}`")));
            }
        }
        let mut e = Entries { map };

        let seed = e.num::<u64>("seed", "an unsigned integer")?.ok_or_else(|| CliError::Config("missing required key `seed`".into()))?;
        let output_dir = e
            .take("output_dir", |s| (!s.is_empty()).then(|| PathBuf::from(s)), "a path")?
            .ok_or_else(|| CliError::Config("missing required key `output_dir`".into()))?;
        let output_dir = if output_dir.is_absolute() { output_dir } else { base.join(output_dir) };
        let delta = e.num("delta", "a number")?.unwrap_or(0.05);

        let d = MoonsEnvironmentSpec::default();
        let environment = MoonsEnvironmentSpec {
            n_train_tasks: e.num("n_train_tasks", "an unsigned integer")?.unwrap_or(d.n_train_tasks),
            n_test_tasks: e.num("n_test_tasks", "an unsigned integer")?.unwrap_or(d.n_test_tasks),
            examples_per_task: e.num("examples_per_task", "an unsigned integer")?.unwrap_or(d.examples_per_task),
            noise_sigma: e.num("noise_sigma", "a number")?.unwrap_or(d.noise_sigma),
            rotation_range: (
                e.num("rotation_min", "a number")?.unwrap_or(d.rotation_range.0),
                e.num("rotation_max", "a number")?.unwrap_or(d.rotation_range.1),
            ),
            center_range: (
                e.num("center_min", "a number")?.unwrap_or(d.center_range.0),
                e.num("center_max", "a number")?.unwrap_or(d.center_range.1),
            ),
            scale_range: (
                e.num("scale_min", "a number")?.unwrap_or(d.scale_range.0),
                e.num("scale_max", "a number")?.unwrap_or(d.scale_range.1),
            ),
            validation_fraction: e.num("validation_fraction", "a number")?.unwrap_or(d.validation_fraction),
            master_seed: seed,
        };

        let architecture = e.take("architecture", Architecture::parse, "PBH, SCH_MINUS, SCH_PLUS or PBSCH")?;
        let hypernet = HypernetConfig {
            architecture: architecture.unwrap_or(Architecture::SchMinus),
            input_dim: 2,
            c: e.num("c", "an unsigned integer")?.unwrap_or(3),
            b: e.num("b", "an unsigned integer")?.unwrap_or(0),
            mlp1: e.take("mlp1", parse_list, "comma-separated layer sizes")?.unwrap_or_else(|| vec![100, 100]),
            mlp2: e.take("mlp2", parse_list, "comma-separated layer sizes")?.unwrap_or_else(|| vec![100]),
            mlp3: e.take("mlp3", parse_list, "comma-separated layer sizes")?.unwrap_or_else(|| vec![100]),
            embed_dim: e.num("embed_dim", "an unsigned integer")?.unwrap_or(32),
            key_dim: e.num("key_dim", "an unsigned integer")?.unwrap_or(32),
        };

        let p = TrainProtocol::default();
        let protocol = TrainProtocol {
            learning_rate: e.num("learning_rate", "a number")?.unwrap_or(p.learning_rate),
            max_epochs: e.num("max_epochs", "an unsigned integer")?.unwrap_or(p.max_epochs),
            patience: e.num("patience", "an unsigned integer")?.unwrap_or(p.patience),
            support_size: e.num("support_size", "an unsigned integer")?.unwrap_or(p.support_size),
            n_mc: e.num("n_mc", "an unsigned integer")?.unwrap_or(p.n_mc),
        };

        let g = SweepGrid::published(hypernet.architecture);
        let lists = "`;`-separated lists of layer sizes";
        let sweep = SweepGrid {
            architectures: e.take("sweep_architectures", parse_architectures, "comma-separated architectures")?.unwrap_or(g.architectures),
            learning_rates: e.take("sweep_learning_rates", parse_list, "comma-separated numbers")?.unwrap_or(g.learning_rates),
            mlp1: e.take("sweep_mlp1", parse_list_of_lists, lists)?.unwrap_or(g.mlp1),
            mlp2: e.take("sweep_mlp2", parse_list_of_lists, lists)?.unwrap_or(g.mlp2),
            mlp3: e.take("sweep_mlp3", parse_list_of_lists, lists)?.unwrap_or(g.mlp3),
            c: e.take("sweep_c", parse_list, "comma-separated integers")?.unwrap_or(g.c),
            b: e.take("sweep_b", parse_list, "comma-separated integers")?.unwrap_or(g.b),
        };
        debug_assert!(e.map.is_empty());

        if !(delta > 0.0 && delta <= 1.0) {
            return Err(CliError::Config(format!("`delta` must lie in (0, 1], got {delta}")));
        }
        environment.validate().map_err(|err| CliError::Config(err.to_string()))?;
        Ok(RunConfig { seed, output_dir, delta, environment, hypernet, protocol, sweep })
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        RunConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}
