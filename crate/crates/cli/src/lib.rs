//! Command-line driver: task generation, meta-training, certification,
//! sweeps and standalone bound calculators.

pub mod config;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hypercert::bounds::{self, BoundBudget, BoundError, BoundKind, Certificate};
use hypercert::hypernet::{Checkpoint, HypernetError};
use hypercert::metalearn::{self, certificates_csv, format_num, meta_train, sweep_csv, MetaError};
use hypercert::tasks::{gen_meta_dataset, load_tasks, save_tasks, MetaDataset, TaskError};
use serde::Serialize;
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("numeric: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
        CliError::Io { path: path.display().to_string(), msg: e.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 2,
            _ => 1,
        }
    }
}

fn one_line(s: impl std::fmt::Display) -> String {
    s.to_string().split_whitespace().collect::<Vec<_>>().join(" ")
}

impl From<MetaError> for CliError {
    fn from(e: MetaError) -> Self {
        match e {
            MetaError::Divergence { .. } | MetaError::Tensor(_) | MetaError::Bound(_) => CliError::Numeric(one_line(e)),
            MetaError::Hypernet(HypernetError::Io(_)) => CliError::Io { path: "checkpoint".into(), msg: one_line(e) },
            _ => CliError::Config(one_line(e)),
        }
    }
}

impl From<TaskError> for CliError {
    fn from(e: TaskError) -> Self {
        CliError::Config(one_line(e))
    }
}

/// Names the flag behind a bound precondition.
fn flag_error(e: BoundError) -> CliError {
    let BoundError::Domain { name, .. } = &e;
    let flag = match name.as_str() {
        "m_prime" => "m".to_string(),
        "C" => "catoni-c".to_string(),
        "sigma_sq" => "variance".to_string(),
        "kl_msg" => "kl".to_string(),
        "comp_size" => "comp".to_string(),
        n => n.replace('_', "-"),
    };
    CliError::Usage(format!("--{flag}: {}", one_line(e)))
}

#[derive(Debug, Parser)]
#[command(name = "hypercert", version, about = "Meta-learned predictors with generalization certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for this command; defaults to `<output_dir>/<command>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the moons task environment.
    Gen(RunArgs),
    /// Meta-train a hypernetwork on generated tasks.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Task directory; defaults to `<output_dir>/gen`.
        #[arg(long)]
        tasks: Option<PathBuf>,
    },
    /// Certify every test task with a trained checkpoint.
    Certify {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Defaults to `<output_dir>/train/checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train every point of the hyperparameter grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        tasks: Option<PathBuf>,
    },
    /// Evaluate one bound from its inputs.
    Bound(BoundArgs),
    /// Train-set compression bound against its kl counterpart over a grid of validation losses.
    CompareBounds(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundChoice {
    Pb,
    SchBinary,
    SchReal,
    Pbsch,
    PbschDisintegrated,
    Catoni,
    Linear,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    pub kind: BoundChoice,
    /// Task size m'.
    #[arg(long)]
    pub m: u64,
    #[arg(long)]
    pub delta: f64,
    /// Compression-set size.
    #[arg(long, default_value_t = 0)]
    pub c: u64,
    /// Message size.
    #[arg(long, default_value_t = 0)]
    pub b: u64,
    #[arg(long, default_value_t = 0.0)]
    pub emp_loss: f64,
    #[arg(long, default_value_t = 0.0)]
    pub mu_norm_sq: f64,
    /// Errors on the complement (sch-binary).
    #[arg(long)]
    pub errors: Option<u64>,
    /// Message divergence (catoni, linear).
    #[arg(long)]
    pub kl: Option<f64>,
    #[arg(long)]
    pub catoni_c: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Sub-Gaussian variance proxy (linear).
    #[arg(long)]
    pub variance: Option<f64>,
    /// Log prior of the compression set; defaults to `-ln C(m, c)`.
    #[arg(long, allow_hyphen_values = true)]
    pub log_prior_j: Option<f64>,
    /// Also write the breakdown as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, default_value_t = 10_000)]
    pub m: u64,
    #[arg(long, default_value_t = 2000)]
    pub comp: u64,
    #[arg(long, default_value_t = 100.0)]
    pub kl: f64,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long, default_value_t = 101)]
    pub resolution: usize,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Creates `path` and fails if it already exists.
fn write_new(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut f = OpenOptions::new().write(true).create_new(true).open(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(contents.as_bytes()).map_err(|e| CliError::io(path, e))
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
    inputs: serde_json::Value,
}

fn write_run_json(dir: &Path, command: &str, cfg: &RunConfig, inputs: serde_json::Value) -> Result<(), CliError> {
    let rec = RunRecord { command, seed: cfg.seed, config: cfg, inputs };
    let json = serde_json::to_string_pretty(&rec).map_err(|e| CliError::Numeric(one_line(e)))?;
    write_new(&dir.join("run.json"), &(json + "\n"))
}

fn out_dir(cfg: &RunConfig, run: &RunArgs, name: &str) -> PathBuf {
    run.out.clone().unwrap_or_else(|| cfg.output_dir.join(name))
}

fn load_dataset(cfg: &RunConfig, tasks: &Option<PathBuf>) -> Result<(PathBuf, MetaDataset), CliError> {
    let dir = tasks.clone().unwrap_or_else(|| cfg.output_dir.join("gen"));
    let md = load_tasks(&dir).map_err(|e| match e {
        TaskError::Io(_) => CliError::io(&dir, one_line(e)),
        other => CliError::from(other),
    })?;
    Ok((dir, md))
}

fn path_json(p: &Path) -> serde_json::Value {
    serde_json::Value::String(p.display().to_string())
}

pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut say = |s: String| writeln!(stdout, "{s}").map_err(|e| CliError::io(Path::new("<stdout>"), e));
    match cli.command {
        Command::Gen(run) => {
            let cfg = RunConfig::load(&run.config)?;
            let dir = out_dir(&cfg, &run, "gen");
            prepare_dir(&dir)?;
            let md = gen_meta_dataset(&cfg.environment)?;
            write_run_json(&dir, "gen", &cfg, serde_json::json!({}))?;
            let manifest = save_tasks(&dir, &md).map_err(|e| CliError::io(&dir, one_line(e)))?;
            say(format!("wrote {} tasks to {}", manifest.tasks.len(), dir.display()))
        }
        Command::Train { run, tasks } => {
            let cfg = RunConfig::load(&run.config)?;
            let (task_dir, md) = load_dataset(&cfg, &tasks)?;
            let dir = out_dir(&cfg, &run, "train");
            prepare_dir(&dir)?;
            let mut hcfg = cfg.hypernet.clone();
            hcfg.input_dim = md.train.train.first().map(|t| t.dim()).unwrap_or(hcfg.input_dim);
            hcfg.validate().map_err(|e| CliError::Config(one_line(e)))?;
            write_run_json(&dir, "train", &cfg, serde_json::json!({ "tasks": path_json(&task_dir) }))?;
            let (net, log) = meta_train(&md.train, &hcfg, &cfg.protocol, cfg.seed)?;
            let ck = Checkpoint::from_hypernet(&net, cfg.seed, md.train.task_ids());
            write_new(&dir.join("checkpoint.json"), &ck.to_json().map_err(|e| CliError::Numeric(one_line(e)))?)?;
            write_new(&dir.join("training_log.txt"), &log.to_text())?;
            say(format!(
                "trained {} epochs, best epoch {} with validation error {}",
                log.epochs.len(),
                log.best_epoch,
                format_num(log.best_val_error)
            ))
        }
        Command::Certify { run, tasks, checkpoint } => {
            let cfg = RunConfig::load(&run.config)?;
            let (task_dir, md) = load_dataset(&cfg, &tasks)?;
            let ck_path = checkpoint.unwrap_or_else(|| cfg.output_dir.join("train").join("checkpoint.json"));
            let ck = Checkpoint::load(&ck_path).map_err(|e| CliError::io(&ck_path, one_line(e)))?;
            let net = ck.to_hypernet().map_err(|e| CliError::Config(one_line(e)))?;
            let dir = out_dir(&cfg, &run, "certify");
            prepare_dir(&dir)?;
            write_run_json(
                &dir,
                "certify",
                &cfg,
                serde_json::json!({ "tasks": path_json(&task_dir), "checkpoint": path_json(&ck_path) }),
            )?;
            let done = metalearn::certify_all(
                &net,
                &ck.training_task_ids,
                &md.test,
                cfg.delta,
                cfg.protocol.n_mc,
                cfg.protocol.support_size,
                cfg.seed,
            )?;
            write_new(&dir.join("certificates.csv"), &certificates_csv(&done).map_err(|e| CliError::io(&dir, e))?)?;
            let n = done.len().max(1) as f64;
            let err = done.iter().map(|t| t.row.test_query_error).sum::<f64>() / n;
            say(format!("certified {} tasks, mean test error {}", done.len(), format_num(err)))?;
            if let Some(first) = done.first() {
                for (k, b) in first.row.bounds.iter().enumerate() {
                    let tau = done.iter().map(|t| t.row.bounds[k].certificate.tau_star).sum::<f64>() / n;
                    say(format!("{} mean tau_star {}", b.certificate.kind, format_num(tau)))?;
                }
            }
            Ok(())
        }
        Command::Sweep { run, tasks } => {
            let cfg = RunConfig::load(&run.config)?;
            let (task_dir, md) = load_dataset(&cfg, &tasks)?;
            let dir = out_dir(&cfg, &run, "sweep");
            prepare_dir(&dir)?;
            let mut base = cfg.hypernet.clone();
            base.input_dim = md.train.train.first().map(|t| t.dim()).unwrap_or(base.input_dim);
            let outcome = metalearn::sweep(&cfg.sweep, &base, &cfg.protocol, &md.train, cfg.seed);
            let skipped: Vec<_> =
                outcome.skipped.iter().map(|(p, why)| serde_json::json!({ "point": p.index, "reason": why })).collect();
            write_run_json(&dir, "sweep", &cfg, serde_json::json!({ "tasks": path_json(&task_dir), "skipped": skipped }))?;
            write_new(&dir.join("sweep.csv"), &sweep_csv(&outcome).map_err(|e| CliError::io(&dir, e))?)?;
            for (p, why) in &outcome.skipped {
                eprintln!("skipped point {}: {why}", p.index);
            }
            match outcome.best {
                Some(i) => say(format!("{} points trained, best point {i}", outcome.results.len())),
                None => Err(CliError::Numeric("no sweep point trained successfully".into())),
            }
        }
        Command::Bound(args) => {
            let text = bound_report(&args)?;
            if let Some(path) = &args.csv {
                write_new(path, &text.csv)?;
            }
            say(text.table.trim_end().to_string())
        }
        Command::CompareBounds(args) => {
            let grid = bounds::uniform_grid(args.resolution);
            let rows = bounds::compare_trainset_bounds(args.m, args.comp, args.kl, args.delta, &grid).map_err(flag_error)?;
            let mut w = csv_writer();
            push(&mut w, &["val_loss", "bound_squared", "bound_kl_pinsker", "gap"])?;
            for r in rows {
                push(&mut w, &[r.val_loss, r.bound_squared, r.bound_kl_pinsker, r.gap].map(format_num))?;
            }
            let csv = finish(w)?;
            match &args.out {
                Some(path) => write_new(path, &csv),
                None => say(csv.trim_end().to_string()),
            }
        }
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::Writer::from_writer(Vec::new())
}

fn push<I: AsRef<[u8]>>(w: &mut csv::Writer<Vec<u8>>, rec: &[I]) -> Result<(), CliError> {
    w.write_record(rec).map_err(|e| CliError::Numeric(one_line(e)))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Numeric(one_line(e)))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub struct BoundReport {
    pub tau_star: f64,
    pub table: String,
    pub csv: String,
}

fn need<T>(v: Option<T>, flag: &str, kind: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("--{flag} is required for `bound {kind}`")))
}

fn certificate_for(args: &BoundArgs) -> Result<Certificate, CliError> {
    let mut budget = BoundBudget::new(args.m, args.c, args.b, args.delta, args.emp_loss, args.mu_norm_sq).map_err(flag_error)?;
    if let Some(lpj) = args.log_prior_j {
        budget.log_prior_j = lpj;
        budget.validate().map_err(flag_error)?;
    }
    let cert = match args.kind {
        BoundChoice::Pb => bounds::bound_pb(&budget),
        BoundChoice::SchBinary => bounds::bound_sch_binary(&budget, need(args.errors, "errors", "sch-binary")?),
        BoundChoice::SchReal => bounds::bound_sch_real(&budget),
        BoundChoice::Pbsch => bounds::bound_pbsch(&budget),
        BoundChoice::PbschDisintegrated => bounds::bound_pbsch_disintegrated(&budget),
        BoundChoice::Catoni | BoundChoice::Linear => unreachable!("closed-form kinds have no breakdown"),
    };
    cert.map_err(flag_error)
}

/// Evaluates the chosen bound and renders it as a table and as CSV.
pub fn bound_report(args: &BoundArgs) -> Result<BoundReport, CliError> {
    let mut w = csv_writer();
    push(&mut w, &["kind", "term", "nats", "cumulative_tau"])?;
    let (kind, tau, terms) = match args.kind {
        BoundChoice::Catoni | BoundChoice::Linear => {
            if args.c >= args.m {
                return Err(CliError::Usage("--c: must be smaller than --m".into()));
            }
            let lpj = match args.log_prior_j {
                Some(v) => v,
                None => -bounds::log_binomial(args.m, args.c).map_err(flag_error)?,
            };
            let n = args.m - args.c;
            let kl = need(args.kl, "kl", if args.kind == BoundChoice::Catoni { "catoni" } else { "linear" })?;
            let v = if args.kind == BoundChoice::Catoni {
                bounds::bound_catoni(need(args.catoni_c, "catoni-c", "catoni")?, args.emp_loss, kl, lpj, args.delta, n)
            } else {
                bounds::bound_linear_subgaussian(
                    need(args.lambda, "lambda", "linear")?,
                    need(args.variance, "variance", "linear")?,
                    args.emp_loss,
                    kl,
                    lpj,
                    args.delta,
                    n,
                    n,
                )
            }
            .map_err(flag_error)?;
            let kind = if args.kind == BoundChoice::Catoni { BoundKind::Catoni } else { BoundKind::Linear };
            (kind, v, Vec::new())
        }
        _ => {
            let cert = certificate_for(args)?;
            (cert.kind, cert.tau_star, cert.breakdown)
        }
    };
    let mut table = format!("{kind} tau_star = {}\n", format_num(tau));
    if !terms.is_empty() {
        table.push_str(&format!("{:<12} {:>16} {:>16}\n", "term", "nats", "cumulative_tau"));
    }
    for t in &terms {
        table.push_str(&format!("{:<12} {:>16} {:>16}\n", t.label, format_num(t.nats), format_num(t.cumulative_tau)));
        push(&mut w, &[kind.to_string(), t.label.clone(), format_num(t.nats), format_num(t.cumulative_tau)])?;
    }
    push(&mut w, &[kind.to_string(), "tau_star".to_string(), String::new(), format_num(tau)])?;
    Ok(BoundReport { tau_star: tau, table, csv: finish(w)? })
}
