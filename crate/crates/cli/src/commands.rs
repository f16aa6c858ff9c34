use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use polygam::{
    export_shapes, load_csv, loss_eval, partition, read_feature_columns, train as fit, BinLayout, Dataset, Error,
    ParameterStore,
};
use serde::Serialize;

use crate::config::RunConfig;

/// A failure with its exit code class.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    fn config_list(problems: Vec<String>) -> Self {
        CliError::Config(format!("invalid configuration:\n  {}", problems.join("\n  ")))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) | Error::Constraint(_) => CliError::Config(msg),
            Error::Numeric(_) => CliError::Numeric(msg),
            _ => CliError::Data(msg),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn init_threads() -> std::result::Result<(), String> {
    let Ok(v) = std::env::var("PB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("PB_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

/// Exclusive hold on an output directory; released on drop.
struct DirLock(PathBuf);

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join(".polygam.lock");
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => CliError::Config(format!(
                    "{} is locked by another run (remove {} if stale)",
                    dir.display(),
                    path.display()
                )),
                _ => io_err(&path, e),
            })?;
        Ok(Self(path))
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Serialize)]
struct Metrics {
    task: &'static str,
    loss: &'static str,
    train: Option<f64>,
    valid: Option<f64>,
    test: Option<f64>,
    n_train: usize,
    n_valid: usize,
    n_test: usize,
    best_iteration: usize,
    iterations_run: usize,
}

fn eval(model: &ParameterStore, data: &Dataset) -> Result<Option<f64>> {
    if data.n_samples() == 0 {
        return Ok(None);
    }
    let (_, yhat) = model.predict(data)?;
    Ok(Some(loss_eval(data.targets(), yhat.view(), data.task())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("metrics serialise");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn train(config_path: &Path) -> Result<()> {
    let text = fs::read_to_string(config_path).map_err(|e| io_err(config_path, e))?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let cfg = RunConfig::parse(&text, base).map_err(CliError::config_list)?;

    let data = load_csv(&cfg.data_path, &cfg.target, cfg.task, &cfg.categorical)?;
    let spec = cfg.constraint_spec(&data).map_err(CliError::config_list)?;
    let _lock = DirLock::acquire(&cfg.output_dir)?;

    let parts = partition(&data, cfg.valid_fraction, cfg.test_fraction, cfg.seed);
    let (tr, va, te) = (data.subset(&parts.train), data.subset(&parts.valid), data.subset(&parts.test));
    if tr.n_samples() == 0 {
        return Err(CliError::Data("the training partition is empty".into()));
    }
    let layout = BinLayout::fit(&tr, &cfg.scheme);
    let out = fit(&tr, (va.n_samples() > 0).then_some(&va), &layout, &spec, &cfg.train)?;
    log::info!(
        "stopped after {} iterations, best {}",
        out.log.iterations_run,
        out.log.best_iteration
    );

    let dir = &cfg.output_dir;
    out.model.save(dir.join("model.json"))?;
    out.log.save(dir.join("train_log.jsonl"))?;
    let metrics = Metrics {
        task: data.task().name(),
        loss: match data.task() {
            polygam::Task::Regression => "mse",
            polygam::Task::Binary => "bce",
            polygam::Task::Multiclass { .. } => "ce",
        },
        train: eval(&out.model, &tr)?,
        valid: eval(&out.model, &va)?,
        test: eval(&out.model, &te)?,
        n_train: tr.n_samples(),
        n_valid: va.n_samples(),
        n_test: te.n_samples(),
        best_iteration: out.log.best_iteration,
        iterations_run: out.log.iterations_run,
    };
    write_json(&dir.join("metrics.json"), &metrics)?;
    let resolved = dir.join("config.resolved.ini");
    fs::write(&resolved, cfg.to_ini()).map_err(|e| io_err(&resolved, e))?;
    Ok(())
}

pub fn predict(model_path: &Path, data_path: &Path, out_path: &Path) -> Result<()> {
    let model = ParameterStore::load(model_path)?;
    let names: Vec<String> = model.features().iter().map(|f| f.name.clone()).collect();
    let columns = read_feature_columns(data_path, &names, Some(model.target_name()))?;
    let (f, yhat) = model.predict_columns(&columns)?;

    let file = File::create(out_path).map_err(|e| io_err(out_path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let n_out = model.n_outputs();
    let mut header = vec!["row_id".to_string()];
    header.extend((0..n_out).map(|i| format!("F_{i}")));
    header.extend((0..n_out).map(|i| format!("yhat_{i}")));
    let csv_err = |e: csv::Error| CliError::Data(format!("{}: {e}", out_path.display()));
    w.write_record(&header).map_err(csv_err)?;
    let mut record = Vec::with_capacity(header.len());
    for n in 0..f.nrows() {
        record.clear();
        record.push(n.to_string());
        record.extend(f.row(n).iter().map(f64::to_string));
        record.extend(yhat.row(n).iter().map(f64::to_string));
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|e| io_err(out_path, e))?;
    Ok(())
}

pub fn explain(model_path: &Path, features: &[String], grid: usize, ci: bool, out_dir: &Path) -> Result<()> {
    if grid < 2 {
        return Err(CliError::Config("--grid needs at least 2 points".into()));
    }
    let model = ParameterStore::load(model_path)?;
    let _lock = DirLock::acquire(out_dir)?;
    let grids = export_shapes(&model, features, grid, ci, Some(out_dir))?;
    log::info!("wrote {} shape tables to {}", grids.len(), out_dir.display());
    Ok(())
}
