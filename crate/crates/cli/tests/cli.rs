use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_EMULATE: &str = r#"
[sampler]
iterations = 200
k = [3, 3]

[emulate.train]
kind = "prior"
n = 25

[emulate.test]
kind = "grid"
per_dim = 4
"#;

const SMALL_RECOVER: &str = r#"
[recover]
n = 120
iterations = 300
ensemble = 4
horizon = 50
"#;

const SMALL_BENCH: &str = r#"
[benchmark]
k = [3, 3]
n_train = 25
n_test = 30
iterations = 200
models = ["hiergp", "ols", "lasso"]
"#;

fn hiergp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hiergp"))
        .args(args)
        .current_dir(cwd)
        .env_remove("HIERGP_OUT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn emulate_writes_predictions_and_chain() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "e.toml", SMALL_EMULATE);
    let out = tmp.path().join("run");
    let res = hiergp(
        &[
            "emulate",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "5",
        ],
        tmp.path(),
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let preds = fs::read_to_string(out.join("predictions.csv")).unwrap();
    let mut lines = preds.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,mean,lower,upper,truth");
    assert_eq!(lines.count(), 16);
    let chain = fs::read_to_string(out.join("chain.jsonl")).unwrap();
    let header: serde_json::Value = serde_json::from_str(chain.lines().next().unwrap()).unwrap();
    assert_eq!(header["format"], "hiergp-chain");
    assert_eq!(header["sampler"], "hiergp");
    assert_eq!(
        chain.lines().count() as u64,
        1 + header["states"].as_u64().unwrap()
    );
    for name in ["config.toml", "seeds.json", "summary.json", "train.csv"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
}

#[test]
fn same_seed_same_bytes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "e.toml", SMALL_EMULATE);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let res = hiergp(
            &[
                "emulate",
                "--config",
                &cfg,
                "--out",
                dir.to_str().unwrap(),
                "--model",
                "hiergp2",
            ],
            tmp.path(),
        );
        assert!(res.status.success());
    }
    for name in ["predictions.csv", "chain.jsonl", "train.csv"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn unknown_model_is_config_error() {
    let tmp = TempDir::new().unwrap();
    let res = hiergp(&["emulate", "--model", "spline", "--out", "x"], tmp.path());
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn unknown_key_is_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "bad.toml", "[sampler]\niteratons = 10\n");
    let res = hiergp(&["emulate", "--config", &cfg, "--out", "x"], tmp.path());
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_config_error() {
    let tmp = TempDir::new().unwrap();
    let res = hiergp(&["benchmark", "--config", "nope.toml"], tmp.path());
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn output_root_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.toml",
        "[simulate]\nk = [3, 3]\ndraws = 2\ngrid = 5\n",
    );
    let root = tmp.path().join("root");
    let res = Command::new(env!("CARGO_BIN_EXE_hiergp"))
        .args(["simulate-prior", "--config", &cfg])
        .current_dir(tmp.path())
        .env("HIERGP_OUT", &root)
        .output()
        .unwrap();
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let draws = fs::read_to_string(root.join("simulate-prior").join("prior_draws.csv")).unwrap();
    assert_eq!(draws.lines().count(), 1 + 2 * 25);
}

#[test]
fn recover_writes_trajectories_and_coefficients() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "r.toml", SMALL_RECOVER);
    let out = tmp.path().join("rec");
    let res = hiergp(
        &["recover", "--config", &cfg, "--out", out.to_str().unwrap()],
        tmp.path(),
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let traj = fs::read_to_string(out.join("trajectories.csv")).unwrap();
    assert!(traj.starts_with("t,x_1,x_2,sample_id"));
    let coefs: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("coefficients.json")).unwrap()).unwrap();
    assert_eq!(coefs["coordinates"].as_array().unwrap().len(), 2);
}

#[test]
fn benchmark_replications_flag() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "b.toml", SMALL_BENCH);
    let out = tmp.path().join("bench");
    let res = hiergp(
        &[
            "benchmark",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--replications",
            "2",
        ],
        tmp.path(),
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = fs::read_to_string(out.join("benchmark.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().contains("model"));
    assert_eq!(lines.count(), 2 * 3);
    assert!(out.join("summary.json").exists());
}
