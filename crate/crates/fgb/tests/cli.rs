use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fgb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fgb")).args(args).env_remove("FGB_THREADS").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn shipped(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).display().to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p: PathBuf = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SEPARATED: &str = r#"
n1 = 400
n2 = 400
[q1]
kind = "gaussian"
mean = [0.0, 0.0]
var = [1.0, 1.0]
[q2]
kind = "gaussian"
mean = [60.0, 0.0]
var = [1.0, 1.0]
[flow]
layers = 2
hidden = [4]
[train]
max_epochs = 2
"#;

#[test]
fn help_and_version_succeed() {
    let out = fgb(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for word in ["estimate", "bench", "check", "CONFIG FILE", "--threads"] {
        assert!(text.contains(word), "{word}");
    }
    assert_eq!(code(&fgb(&["--version"])), 0);
}

#[test]
fn usage_and_configuration_errors_exit_with_1() {
    assert_eq!(code(&fgb(&[])), 1);
    assert_eq!(code(&fgb(&["frobnicate"])), 1);
    assert_eq!(code(&fgb(&["estimate"])), 1);
    assert_eq!(code(&fgb(&["estimate", "--config", "/nonexistent.toml"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &format!("{SEPARATED}[bench]\nmethods = [\"nope\"]\n"));
    let out = fgb(&["bench", "--config", &bad, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
    let cfg = shipped("gaussian.toml");
    assert_eq!(code(&fgb(&["estimate", "--config", &cfg, "--threads", "0"])), 1);
}

#[test]
fn saturated_estimates_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sep.toml", SEPARATED);
    let out = fgb(&["estimate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&dir.path().join("result.json"))["saturated"], true);
}

#[test]
fn gaussian_estimate_writes_records_and_covers_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = fgb(&["estimate", "--config", &shipped("gaussian.toml"), "--out", d, "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&dir.path().join("result.json"));
    let truth = -0.5 * 2f64.ln();
    let est = r["log_r_hat"].as_f64().unwrap();
    let sd = r["re2_estimate"].as_f64().unwrap().sqrt();
    assert!((est - truth).abs() < 3.0 * sd, "{est} vs {truth} (sd {sd})");
    assert!((r["log_r_truth"].as_f64().unwrap() - truth).abs() < 1e-12);
    assert_eq!(r["seed"], 7);
    assert_eq!(r["log_base"], "e");
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(r["n_estimate"], serde_json::json!([5000, 5000]));
    for name in ["scatter_q1.csv", "scatter_transformed_q1.csv", "scatter_q2.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 5000, "{name}");
        assert!(rows.iter().all(|l| l.split(',').filter_map(|v| v.parse::<f64>().ok()).count() == 2), "{name}");
    }
    let model = dir.path().join("model.txt");
    let checked = fgb(&["check", "--model", model.to_str().unwrap()]);
    assert_eq!(code(&checked), 0);
}

#[test]
fn log10_only_changes_the_printout() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = shipped("gaussian.toml");
    let plain = fgb(&["estimate", "--config", &cfg, "--out", a.path().to_str().unwrap()]);
    let ten = fgb(&["estimate", "--config", &cfg, "--out", b.path().to_str().unwrap(), "--log10"]);
    assert!(String::from_utf8_lossy(&ten.stdout).contains("(log10)"));
    assert!(!String::from_utf8_lossy(&plain.stdout).contains("(log10)"));
    assert_eq!(json(&a.path().join("result.json")), json(&b.path().join("result.json")));
}

#[test]
fn single_repetition_bench_writes_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(shipped("gaussian.toml")).unwrap()
        + "\n[bench]\nreps = 1\nmethods = [\"fgb\", \"geometric\"]\n";
    let cfg = write(dir.path(), "one.toml", &text);
    let out = fgb(&["bench", "--config", &cfg, "--out", dir.path().to_str().unwrap(), "--threads", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "method,mc_mse,mc_mse_se,mean_re2,mean_re2_se,failures,reps");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("fgb,") && lines[1].ends_with(",0,1"));
    assert!(lines[2].starts_with("geometric,") && lines[2].contains(",NA,"));
    let reps = std::fs::read_to_string(dir.path().join("reps.csv")).unwrap();
    assert_eq!(reps.lines().count(), 3);
    assert_eq!(json(&dir.path().join("bench.json"))["study"], "repetitions");
}

#[test]
fn bench_output_does_not_depend_on_threads() {
    let text = std::fs::read_to_string(shipped("gaussian.toml")).unwrap().replace("n1 = 10000", "n1 = 1000").replace("n2 = 10000", "n2 = 1000")
        + "\n[bench]\nreps = 4\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write(a.path(), "c.toml", &text);
    assert_eq!(code(&fgb(&["bench", "--config", &cfg, "--out", a.path().to_str().unwrap(), "--threads", "1"])), 0);
    let out = Command::new(env!("CARGO_BIN_EXE_fgb"))
        .args(["bench", "--config", &cfg, "--out", b.path().to_str().unwrap()])
        .env("FGB_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    for f in ["summary.csv", "reps.csv", "bench.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn check_passes_and_reports_corrupted_models() {
    let out = fgb(&["check"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 6);
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "model.txt", "fgb-flow 1\ndim 2\nlayers x\n");
    let out = fgb(&["check", "--model", &bad]);
    assert_eq!(code(&out), 1);
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().find(|l| l.contains("model-file")).unwrap();
    assert!(line.starts_with("FAIL") && line.contains("line 3"), "{line}");
}

#[test]
fn ring_scatter_files_hold_half_the_samples_in_two_columns() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(shipped("rings12.toml")).unwrap() + "max_epochs = 3\n";
    let cfg = write(dir.path(), "r.toml", &text);
    let out = fgb(&["estimate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!([0, 2].contains(&code(&out)), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["scatter_q1.csv", "scatter_transformed_q1.csv", "scatter_q2.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 1000, "{name}");
        assert!(text.lines().all(|l| l.split(',').count() == 2), "{name}");
    }
    assert_eq!(json(&dir.path().join("result.json"))["train"]["epochs_run"], 3);
}
