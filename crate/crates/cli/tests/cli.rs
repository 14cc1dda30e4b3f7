//! End-to-end behaviour of the command-line tool.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use behavlearn::synth::{default_experiment_spec, Task};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_behavlearn"));
    c.env("RUST_LOG", "warn").env_remove("BEHAVLEARN_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a small spec (12 cases per functionality, 300 i.i.d. examples).
fn small_spec(dir: &Path) -> PathBuf {
    let mut spec = default_experiment_spec(Task::Sentiment);
    spec.iid.samples = 300;
    for c in &mut spec.suite.classes {
        for f in &mut c.functionalities {
            f.cases = 12;
        }
    }
    let path = dir.join("spec.json");
    fs::write(&path, spec.to_json()).unwrap();
    path
}

fn generate(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let spec = small_spec(dir);
    let out = dir.join(name);
    let o = run(&["generate", "--spec", spec.to_str().unwrap(), "--seed", &seed.to_string(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn matrix_config(dir: &Path, data: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"suite = "{}"
iid = "{}"
seed = 4
configs = ["iid_then_suite", "iid_then_mixed"]
methods = ["vanilla", "group_dro"]
axes = ["func"]
resamples = 200
{extra}
[hyper]
epochs_iid = 1
epochs_suite = 1
[options]
feature_dim = 256
hidden = 6
"#,
        data.join("suite.json").display(),
        data.join("iid.tsv").display()
    );
    let path = dir.join("matrix.toml");
    fs::write(&path, text).unwrap();
    path
}

fn file_hashes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.file_name().unwrap() != "timing.jsonl" {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn generate_writes_three_reproducible_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a", 1);
    let b = generate(dir.path(), "b", 1);
    let c = generate(dir.path(), "c", 2);
    let ha = file_hashes(&a);
    assert_eq!(ha.keys().cloned().collect::<Vec<_>>(), ["iid.tsv", "manifest.json", "suite.json"]);
    assert_eq!(ha, file_hashes(&b));
    assert_ne!(ha["suite.json"], file_hashes(&c)["suite.json"]);
}

#[test]
fn generate_default_specs() {
    let dir = tempfile::tempdir().unwrap();
    for task in ["sentiment", "duplicate"] {
        let out = dir.path().join(task);
        let o = run(&["generate", "--task", task, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("3600 cases"), "{}", stdout(&o));
    }
}

#[test]
fn malformed_spec_is_a_data_error_with_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"task\": \"x\",\n  \"iid\": \n}").unwrap();
    let o = run(&["generate", "--spec", bad.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["run-matrix", "--no-such-flag"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run-matrix", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let o = run(&["run-matrix", "--task", "sentiment", "--methods", "bogus", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn report_without_runs_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["report", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn matrix_runs_resumes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "data", 3);
    let config = matrix_config(dir.path(), &data, "");
    let out = dir.path().join("out");
    let args = ["run-matrix", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "2"];

    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let n_func = 12;
    let planned = 2 * 2 * (1 + 1 + n_func);
    assert!(stdout(&o).contains(&format!("{planned} runs planned: {planned} trained, 0 already complete")), "{}", stdout(&o));

    let again = run(&args);
    assert!(again.status.success());
    assert!(stdout(&again).contains(&format!("{planned} runs planned: 0 trained, {planned} already complete")));

    // One row per configuration-method plus the baseline.
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 2 + 1);
    let matrix = fs::read_to_string(out.join("reports/iid_then_suite__vanilla.matrix.csv")).unwrap();
    let header: Vec<&str> = matrix.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 1 + n_func);
    assert_eq!(&header[..2], ["scenario", "average"]);
    assert_eq!(matrix.lines().count(), 1 + 3);

    // Reports are recomputed from the stored predictions byte for byte.
    let before = file_hashes(&out);
    let o = run(&["report", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("iid_then_mixed/group_dro"));
    assert_eq!(before, file_hashes(&out));

    let o = run(&["audit", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1 + planned);

    let o = run(&[
        "significance", "--out", out.to_str().unwrap(), "--a", "iid_then_suite/vanilla", "--b", "iid/vanilla",
        "--resamples", "500",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("binomial p ="), "{}", stdout(&o));
    let o = run(&[
        "significance", "--out", out.to_str().unwrap(), "--a", "iid_then_suite/vanilla", "--b",
        "iid_then_mixed/vanilla", "--scenario", "func", "--resamples", "500",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&["significance", "--out", out.to_str().unwrap(), "--a", "nope/x", "--b", "iid/vanilla"]);
    assert_eq!(o.status.code(), Some(1));

    // Changed settings against existing runs are refused, and nothing is
    // overwritten.
    let changed = matrix_config(dir.path(), &data, "").to_str().unwrap().to_string();
    fs::write(&changed, fs::read_to_string(&changed).unwrap().replace("epochs_suite = 1", "epochs_suite = 2")).unwrap();
    let o = run(&["run-matrix", "--config", &changed, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("different inputs or settings"), "{}", stderr(&o));
    assert_eq!(before, file_hashes(&out));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "data", 5);
    let config = matrix_config(dir.path(), &data, "");
    let outs: Vec<PathBuf> = ["x", "y"].iter().map(|n| dir.path().join(n)).collect();
    for (out, workers) in outs.iter().zip(["1", "3"]) {
        let o = run(&[
            "run-matrix", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", workers,
            "--axis", "class", "--methods", "vanilla,irm", "--configs", "iid_plus_suite",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (a, b) = (file_hashes(&outs[0]), file_hashes(&outs[1]));
    assert!(a.len() > 10);
    assert_eq!(a, b);
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path());
    let root = dir.path().join("from-env");
    let o = bin()
        .args(["generate", "--spec", spec.to_str().unwrap()])
        .env("BEHAVLEARN_OUT", &root)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(root.join("suite.json").exists());
}
