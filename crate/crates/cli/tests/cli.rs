use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn housing() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/housing.csv")
}

fn polygam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polygam"))
        .args(args)
        .env("PB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, data: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "[data]\npath = {}\ntarget = MEDV\ncategorical = CHAS\n\n[train]\nmax_iterations = 300\nearly_stopping_patience = 30\n\n[output]\ndir = out\n{extra}",
        data.display()
    );
    let path = dir.join("run.ini");
    fs::write(&path, text).unwrap();
    path
}

fn run_train(cfg: &Path) -> Output {
    let out = polygam(&["train", "-c", cfg.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn metrics(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("out/metrics.json")).unwrap()).unwrap()
}

fn column(csv_text: &str, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn train_writes_all_artifacts_with_finite_metrics() {
    let tmp = TempDir::new().unwrap();
    run_train(&write_config(tmp.path(), &housing(), ""));
    for f in ["model.json", "train_log.jsonl", "metrics.json", "config.resolved.ini"] {
        assert!(tmp.path().join("out").join(f).exists(), "{f} missing");
    }
    assert!(!tmp.path().join("out/.polygam.lock").exists());
    let m = metrics(tmp.path());
    for split in ["train", "valid", "test"] {
        let v = m[split].as_f64().unwrap();
        assert!(v.is_finite() && v > 0.0, "{split} = {v}");
    }
    assert_eq!(m["n_train"].as_u64().unwrap() + m["n_valid"].as_u64().unwrap() + m["n_test"].as_u64().unwrap(), 506);
    assert!(m["train"].as_f64().unwrap() < 84.0, "should beat the variance of MEDV");
}

#[test]
fn training_twice_is_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run_train(&write_config(a.path(), &housing(), ""));
    run_train(&write_config(b.path(), &housing(), ""));
    for f in ["model.json", "metrics.json", "train_log.jsonl"] {
        assert_eq!(
            fs::read(a.path().join("out").join(f)).unwrap(),
            fs::read(b.path().join("out").join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn zero_iterations_predicts_the_mean() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &housing(),
        "\n[split]\ntrain = 1\nvalid = 0\ntest = 0\n",
    );
    let text = fs::read_to_string(&cfg).unwrap().replace(
        "max_iterations = 300\nearly_stopping_patience = 30",
        "max_iterations = 0\nearly_stopping_patience = 0",
    );
    fs::write(&cfg, text).unwrap();
    run_train(&cfg);
    let y = column(&fs::read_to_string(housing()).unwrap(), "MEDV");
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
    let got = metrics(tmp.path())["train"].as_f64().unwrap();
    assert!((got - var).abs() < 1e-9 * var, "{got} vs {var}");
}

#[test]
fn predictions_reproduce_the_training_loss() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &housing(), "\n[split]\ntrain = 1\nvalid = 0\ntest = 0\n");
    let text = fs::read_to_string(&cfg)
        .unwrap()
        .replace("early_stopping_patience = 30", "early_stopping_patience = 0");
    fs::write(&cfg, text).unwrap();
    run_train(&cfg);

    let preds = tmp.path().join("preds.csv");
    let model = tmp.path().join("out/model.json");
    let out = polygam(&[
        "predict",
        "-m",
        model.to_str().unwrap(),
        "-d",
        housing().to_str().unwrap(),
        "-o",
        preds.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&preds).unwrap();
    assert!(text.starts_with("row_id,F_0,yhat_0\n"));
    let yhat = column(&text, "yhat_0");
    let y = column(&fs::read_to_string(housing()).unwrap(), "MEDV");
    assert_eq!(yhat.len(), y.len());
    let mse = y.iter().zip(&yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64;

    let log = fs::read_to_string(tmp.path().join("out/train_log.jsonl")).unwrap();
    let last: serde_json::Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    let logged = last["train_loss"].as_f64().unwrap();
    assert!((mse - logged).abs() < 1e-9, "{mse} vs {logged}");
}

fn trained_model(tmp: &TempDir) -> PathBuf {
    run_train(&write_config(tmp.path(), &housing(), ""));
    tmp.path().join("out/model.json")
}

#[test]
fn predict_handles_header_only_and_rejects_unknown_columns() {
    let tmp = TempDir::new().unwrap();
    let model = trained_model(&tmp);
    let header = fs::read_to_string(housing()).unwrap().lines().next().unwrap().to_string();

    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, format!("{header}\n")).unwrap();
    let preds = tmp.path().join("p.csv");
    let out = polygam(&["predict", "-m", model.to_str().unwrap(), "-d", empty.to_str().unwrap(), "-o", preds.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(&preds).unwrap(), "row_id,F_0,yhat_0\n");

    let extra = tmp.path().join("extra.csv");
    let body: String = fs::read_to_string(housing())
        .unwrap()
        .lines()
        .take(5)
        .enumerate()
        .map(|(i, l)| if i == 0 { format!("{l},ZZ\n") } else { format!("{l},1\n") })
        .collect();
    fs::write(&extra, body).unwrap();
    let out = polygam(&["predict", "-m", model.to_str().unwrap(), "-d", extra.to_str().unwrap(), "-o", preds.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ZZ"));
}

#[test]
fn invalid_constraint_is_a_config_error_naming_the_feature() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &housing(), "\n[constraints]\nfeature.LSTAT: monotone=3\n");
    let out = polygam(&["train", "-c", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("LSTAT"));
    assert!(!tmp.path().join("out/model.json").exists());
}

#[test]
fn explain_with_bands_brackets_the_curve() {
    let tmp = TempDir::new().unwrap();
    let model = trained_model(&tmp);
    let dir = tmp.path().join("shapes");
    let out = polygam(&[
        "explain", "-m", model.to_str().unwrap(), "--features", "LSTAT,RM", "--ci", "-o", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut csvs: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    csvs.sort();
    assert_eq!(csvs.len(), 2);
    for p in &csvs {
        assert!(p.with_extension("svg").exists());
        let text = fs::read_to_string(p).unwrap();
        let (f, lo, hi) = (column(&text, "f"), column(&text, "ci_lower"), column(&text, "ci_upper"));
        assert_eq!(f.len(), 512);
        for n in 0..f.len() {
            assert!(lo[n] <= f[n] && f[n] <= hi[n], "{}: row {n}", p.display());
        }
    }
}

#[test]
fn explain_rejects_unknown_features() {
    let tmp = TempDir::new().unwrap();
    let model = trained_model(&tmp);
    let out = polygam(&["explain", "-m", model.to_str().unwrap(), "--features", "nope", "-o", tmp.path().join("s").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    run_train(&write_config(tmp.path(), &housing(), "\n[constraints]\nfeature.LSTAT: monotone=-1 S=1\n"));
    let resolved = fs::read_to_string(tmp.path().join("out/config.resolved.ini")).unwrap();

    let again = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out").display().to_string();
    let redirected = resolved.replace(&out_dir, &again.path().join("out").display().to_string());
    assert_ne!(redirected, resolved);
    let cfg = again.path().join("resolved.ini");
    fs::write(&cfg, redirected).unwrap();
    run_train(&cfg);
    assert_eq!(
        fs::read(tmp.path().join("out/model.json")).unwrap(),
        fs::read(again.path().join("out/model.json")).unwrap()
    );
}
