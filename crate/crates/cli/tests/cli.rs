use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cqe::QuantileModel;
use cqe_cli::{load_model, model_inputs, EXIT_DATA, EXIT_USAGE};

fn cqe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqe"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cqe(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

fn small_config(dir: &Path) {
    fs::write(dir.join("small.toml"), "n_quantiles = 9\nepochs = 3\nhidden_sizes = [16]\nn_dims = 128\n").unwrap();
}

#[test]
fn gen_data_writes_rows_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "--n", "1000", "--out", "a/data.csv"]);
    let csv = fs::read_to_string(d.join("a/data.csv")).unwrap();
    assert_eq!(data_rows(&csv).len(), 1000);
    let sidecar = fs::read_to_string(d.join("a/data.spec.toml")).unwrap();
    assert!(sidecar.contains("family = \"lognormal\""));
    assert!(sidecar.contains("seed = 42"));
    assert!(sidecar.contains("t_max = 300.0"));

    let first = fs::read(d.join("a/data.csv")).unwrap();
    ok(d, &["gen-data", "--n", "1000", "--out", "a/data.csv"]);
    assert_eq!(first, fs::read(d.join("a/data.csv")).unwrap());
}

#[test]
fn gen_data_bad_family_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "family = \"weibull\"\nmu = [1.0, 0.0]\nsigma = [0.5, 0.0]\n").unwrap();
    let out = cqe(d, &["gen-data", "--spec", "bad.toml", "--n", "5", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(EXIT_DATA as i32));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("family"), "{err}");
}

#[test]
fn train_writes_model_and_trace_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d);
    ok(d, &["gen-data", "--n", "2000", "--out", "data.csv"]);
    ok(d, &["train", "--config", "small.toml", "--data", "data.csv", "--out", "m.txt"]);
    let trace = fs::read_to_string(d.join("m.loss.csv")).unwrap();
    assert_eq!(data_rows(&trace).len(), 3);
    let model_text = fs::read_to_string(d.join("m.txt")).unwrap();
    assert!(model_text.contains("# n_quantiles = 9"));

    let model = load_model(&d.join("m.txt")).unwrap();
    let log = cqe::data::load_csv(&d.join("data.csv"), &Default::default()).unwrap();
    let batch = model_inputs(&model, &log).unwrap();
    let again = load_model(&d.join("m.txt")).unwrap();
    for e in batch.examples().iter().take(50) {
        assert_eq!(model.predict(&e.features).unwrap(), again.predict(&e.features).unwrap());
    }
}

#[test]
fn default_config_trains_on_ten_thousand_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "--n", "10000", "--out", "data.csv"]);
    ok(d, &["train", "--data", "data.csv", "--out", "m.txt"]);
    assert!(d.join("m.txt").exists());
    let trace = fs::read_to_string(d.join("m.loss.csv")).unwrap();
    assert_eq!(data_rows(&trace).len(), 20);
}

#[test]
fn eval_reports_and_dqc_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d);
    ok(d, &["gen-data", "--n", "1500", "--out", "data.csv"]);
    ok(d, &["train", "--config", "small.toml", "--data", "data.csv", "--out", "m.txt"]);
    let cde = ok(d, &["eval", "--model", "m.txt", "--data", "data.csv", "--strategy", "cde"]);
    assert!(cde.lines().any(|l| l.starts_with("mae,")));
    assert!(cde.lines().any(|l| l.starts_with("xauc,")));

    let dqc = ok(d, &["eval", "--model", "m.txt", "--data", "data.csv", "--strategy", "dqc", "--k", "1.0", "--tau-low", "0.3"]);
    let cse = ok(d, &["eval", "--model", "m.txt", "--data", "data.csv", "--strategy", "cse", "--tau-low", "0.3"]);
    assert_eq!(dqc, cse);

    let interest = ok(d, &["eval", "--model", "m.txt", "--data", "data.csv", "--task", "interest", "--out", "r.csv"]);
    assert!(interest.contains("gauc,"));
    assert!(interest.contains("ndcg@5,"));
    let file = fs::read_to_string(d.join("r.csv")).unwrap();
    assert!(file.starts_with("# n_quantiles = "));
}

#[test]
fn missing_model_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-data", "--n", "10", "--out", "data.csv"]);
    let out = cqe(d, &["eval", "--model", "no/such/model.txt", "--data", "data.csv"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/model.txt"));
}

#[test]
fn config_errors_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("typo.toml"), "n_quantile = 5\n").unwrap();
    let out = cqe(d, &["gen-data", "--config", "typo.toml", "--n", "10", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE as i32));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_quantile"));
    let out = cqe(d, &["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE as i32));
}

#[test]
fn sweep_rows_and_recovery_trend() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("sweep.toml"), "epochs = 10\n").unwrap();
    ok(d, &["gen-data", "--n", "6000", "--out", "data.csv"]);
    ok(
        d,
        &[
            "sweep-quantiles", "--config", "sweep.toml", "--data", "data.csv", "--encoding", "raw",
            "--spec", "data.spec.toml", "--n-list", "1,99,99", "--out", "sweep.csv",
        ],
    );
    let text = fs::read_to_string(d.join("sweep.csv")).unwrap();
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1], rows[2]);
    let recovery = |row: &str| -> f64 { row.split(',').nth(5).unwrap().parse().unwrap() };
    assert!(recovery(rows[1]) < recovery(rows[0]), "{rows:?}");

    ok(d, &["sweep-quantiles", "--config", "sweep.toml", "--data", "data.csv", "--n-list", "1,10,100", "--out", "s2.csv"]);
    assert_eq!(data_rows(&fs::read_to_string(d.join("s2.csv")).unwrap()).len(), 3);
}

#[test]
fn sweep_records_failed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_config(d);
    ok(d, &["gen-data", "--n", "300", "--out", "data.csv"]);
    ok(d, &["sweep-quantiles", "--config", "small.toml", "--data", "data.csv", "--n-list", "2,0,3", "--out", "s.csv"]);
    let text = fs::read_to_string(d.join("s.csv")).unwrap();
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0,\"error:") || rows[1].starts_with("0,error:"), "{}", rows[1]);
    assert!(rows[2].starts_with("3,ok,"));
}

#[test]
fn compare_three_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["compare", "--n-sessions", "500", "--user-model", "high-churn", "--out", "c.csv"];
    let stdout = ok(d, &args);
    let first = fs::read(d.join("c.csv")).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(stdout, text);
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "strategy,mean_watch_s,se_watch,mean_plays,se_plays,churn_rate");
    assert_eq!(body.len(), 4);
    assert!(text.contains("p_churn = 0.8"));
    ok(d, &args);
    assert_eq!(first, fs::read(d.join("c.csv")).unwrap());
}

#[test]
fn rank_orders_pool() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let pool = cqe::harness::CandidatePool::risky_vs_safe(2, 2).unwrap();
    fs::write(d.join("pool.toml"), pool.to_toml_string()).unwrap();
    let cse = ok(d, &["rank", "--pool", "pool.toml", "--strategy", "cse"]);
    let cde = ok(d, &["rank", "--pool", "pool.toml", "--strategy", "cde"]);
    let first = |s: &str| data_rows(s)[0].split(',').nth(1).unwrap().parse::<usize>().unwrap();
    // Candidates 0-1 are the skip-prone ones, 2-3 the steady ones.
    assert!(first(&cse) >= 2);
    assert!(first(&cde) < 2);
}

#[test]
fn grad_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["grad-check"]);
    assert_eq!(data_rows(&out).len(), 3);
}
