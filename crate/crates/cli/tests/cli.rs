use std::path::Path;
use std::process::{Command, Output};

const MICRO: &str = "seed = 3
output_dir = out
n_train_tasks = 10
n_test_tasks = 4
examples_per_task = 40
support_size = 20
max_epochs = 3
mlp1 = 16
mlp2 = 16
mlp3 = 8
n_mc = 5
";

fn hypercert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypercert")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.conf");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn micro_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MICRO);
    for cmd in ["gen", "train", "certify"] {
        let o = hypercert(&[cmd, "--config", &cfg]);
        assert!(o.status.success(), "{cmd}: {}", stderr(&o));
    }
    let out = dir.path().join("out");
    assert!(out.join("gen/manifest.json").exists());
    assert!(out.join("train/checkpoint.json").exists());
    let log = std::fs::read_to_string(out.join("train/training_log.txt")).unwrap();
    assert!(!log.is_empty());
    let csv = std::fs::read_to_string(out.join("certify/certificates.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("task_id,architecture,kind"));
    // Four test tasks with two certificates each.
    assert_eq!(lines.len(), 1 + 4 * 2);
    assert!(lines[1..].iter().all(|l| l.contains("SCH_MINUS")));

    // Outputs are never overwritten.
    let again = hypercert(&["gen", "--config", &cfg]);
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).contains("run.json"));

    // Certification is reproducible into any directory.
    let other = dir.path().join("recert");
    let o = hypercert(&["certify", "--config", &cfg, "--out", other.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(other.join("certificates.csv")).unwrap(), csv.as_bytes());
}

#[test]
fn config_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\noutput_dir = out\nlearning_rat = 0.1\n");
    let o = hypercert(&["gen", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown key `learning_rat`"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "output_dir = out\n");
    let o = hypercert(&["gen", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("seed"));

    let o = hypercert(&["gen", "--config", dir.path().join("absent.conf").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bound_examples() {
    let o = hypercert(&["bound", "pb", "--m", "100", "--delta", "0.05", "--emp-loss", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tau: f64 = stdout(&o).lines().find_map(|l| l.split_once("tau_star = ")).unwrap().1.trim().parse().unwrap();
    assert!((tau - 0.058155).abs() < 1e-5);

    let o = hypercert(&["bound", "sch-binary", "--m", "2000", "--c", "8", "--delta", "0.05", "--errors", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("0.0263456953689"));
}

#[test]
fn usage_and_numeric_exit_codes() {
    let o = hypercert(&["bound", "pb", "--delta", "0.05"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: usage:"));
    assert!(stderr(&o).contains("--m"));
    assert_eq!(stderr(&o).lines().count(), 1);

    let o = hypercert(&["bound", "pb", "--m", "100", "--delta", "1.5", "--emp-loss", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--delta"), "{}", stderr(&o));

    let o = hypercert(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));

    assert_eq!(hypercert(&["--help"]).status.code(), Some(0));
}

#[test]
fn compare_bounds_table() {
    let o = hypercert(&["compare-bounds", "--resolution", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<String> = stdout(&o).lines().filter(|l| !l.is_empty()).map(str::to_string).collect();
    assert_eq!(rows.len(), 2, "{rows:?}");

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cmp.csv");
    let o = hypercert(&["compare-bounds", "--resolution", "11", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 12);
}
