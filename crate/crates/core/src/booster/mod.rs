//! Second-order boosting of depth-1 polynomial trees.
//!
//! Each iteration computes loss derivatives at the current predictions,
//! lets every output pick its best (feature, degree, threshold) candidate
//! or smoothness-protected global term, and adds the chosen monomials to
//! the parameter store.

mod feasibility;
mod rollback;
mod split;

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use feasibility::{ShapeCheck, FEASIBILITY_TOL};
pub use rollback::{replay, Snapshots};
pub use split::{
    candidate_gain, leaf_value, param_gradients, side_gain, CandidateKind, FeatureCache, FeatureSearch, SearchParams,
    SideSums, SplitCandidate,
};

use crate::data::{BinLayout, Dataset};
use crate::error::{Error, Result};
use crate::loss::{derivatives_into, initial_intercepts, loss_from_raw};
use crate::model::{ConstraintSpec, ParameterStore};
use crate::uncertainty;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l1: f64,
    pub l2: f64,
    pub min_data_in_leaf: usize,
    pub max_iterations: usize,
    /// Stop after this many iterations without a new best validation loss.
    /// `None` trains for `max_iterations` regardless.
    pub early_stopping_patience: Option<usize>,
    /// Share of the non-test rows held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
    /// Iterations between rollback snapshots.
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l1: 0.001,
            l2: 0.01,
            min_data_in_leaf: 10,
            max_iterations: 25_000,
            early_stopping_patience: Some(100),
            validation_fraction: 0.125,
            seed: 0,
            snapshot_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            problems.push(format!("learning_rate {} outside (0, 1]", self.learning_rate));
        }
        if !(self.l1 >= 0.0) || !(self.l2 >= 0.0) {
            problems.push("penalties must be non-negative".to_string());
        }
        if self.min_data_in_leaf == 0 {
            problems.push("min_data_in_leaf must be at least 1".to_string());
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            problems.push(format!("validation_fraction {} outside [0, 1)", self.validation_fraction));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    fn search_params(&self) -> SearchParams {
        SearchParams {
            learning_rate: self.learning_rate,
            l1: self.l1,
            l2: self.l2,
            min_data_in_leaf: self.min_data_in_leaf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateKind {
    Split,
    Global,
    /// No candidate improved the loss model for this output.
    None,
}

/// One line of the training log: the update applied to one output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: usize,
    pub output: usize,
    pub feature: Option<usize>,
    pub degree: Option<usize>,
    pub kind: UpdateKind,
    pub threshold: Option<f64>,
    pub gamma_left: f64,
    pub gamma_right: f64,
    pub gain: f64,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

impl LogRecord {
    fn from_candidate(iteration: usize, output: usize, c: Option<&SplitCandidate>) -> Self {
        match c {
            Some(c) => Self {
                iteration,
                output,
                feature: Some(c.feature),
                degree: Some(c.degree),
                kind: match c.kind {
                    CandidateKind::Split { .. } => UpdateKind::Split,
                    CandidateKind::Global => UpdateKind::Global,
                },
                threshold: match c.kind {
                    CandidateKind::Split { threshold } => Some(threshold),
                    CandidateKind::Global => None,
                },
                gamma_left: c.gamma_left,
                gamma_right: c.gamma_right,
                gain: c.gain,
                train_loss: f64::NAN,
                valid_loss: None,
            },
            None => Self {
                iteration,
                output,
                feature: None,
                degree: None,
                kind: UpdateKind::None,
                threshold: None,
                gamma_left: 0.0,
                gamma_right: 0.0,
                gain: 0.0,
                train_loss: f64::NAN,
                valid_loss: None,
            },
        }
    }
}

/// Everything a training run reports besides the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<LogRecord>,
    pub initial_train_loss: f64,
    pub initial_valid_loss: Option<f64>,
    /// Iteration the returned model corresponds to (0 = intercepts only).
    pub best_iteration: usize,
    pub iterations_run: usize,
}

impl TrainingLog {
    /// Records up to and including the returned model's iteration.
    pub fn applied(&self) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(move |r| r.iteration <= self.best_iteration)
    }

    /// Train loss after `iteration` (0 = the initial model).
    pub fn train_loss_at(&self, iteration: usize) -> Option<f64> {
        if iteration == 0 {
            return Some(self.initial_train_loss);
        }
        self.records.iter().find(|r| r.iteration == iteration).map(|r| r.train_loss)
    }

    /// Newline-delimited JSON, one record per line.
    pub fn write_ndjson(&self, mut w: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_ndjson(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: ParameterStore,
    pub log: TrainingLog,
}

/// Trains with default hooks. See [`train_with_observer`].
pub fn train(
    train: &Dataset,
    valid: Option<&Dataset>,
    layout: &BinLayout,
    constraints: &ConstraintSpec,
    config: &TrainConfig,
) -> Result<TrainOutput> {
    train_with_observer(train, valid, layout, constraints, config, |_, _| {})
}

/// Trains a model; `observer` sees the store after every iteration.
///
/// With a validation set the returned model is the state at the iteration
/// with the lowest validation loss.
pub fn train_with_observer(
    train: &Dataset,
    valid: Option<&Dataset>,
    layout: &BinLayout,
    constraints: &ConstraintSpec,
    config: &TrainConfig,
    mut observer: impl FnMut(usize, &ParameterStore),
) -> Result<TrainOutput> {
    config.validate()?;
    let task = train.task();
    let n_outputs = task.n_outputs();
    let n_features = train.n_features();
    if train.n_samples() == 0 {
        return Err(Error::EmptyDataset);
    }
    if layout.features.len() != n_features {
        return Err(Error::Shape(format!(
            "bin layout has {} features, data has {n_features}",
            layout.features.len()
        )));
    }
    let valid = valid.filter(|v| v.n_samples() > 0);
    if let Some(v) = valid {
        if v.n_features() != n_features || v.task() != task {
            return Err(Error::Shape("validation data does not match the training data".into()));
        }
    }
    if config.early_stopping_patience.is_some() && valid.is_none() {
        return Err(Error::Config("early stopping needs a non-empty validation set".into()));
    }

    let mut store = ParameterStore::new(task, train.target_name(), train.feature_names(), &layout.features, constraints)?;
    for i in 0..n_outputs {
        if (0..n_features).all(|k| !constraints.allowed(i, k)) {
            return Err(Error::Constraint(format!("output {i} has no allowed features")));
        }
    }
    if n_outputs > 1 {
        for (k, c) in constraints.features.iter().enumerate() {
            if c.is_shape_constrained() && store.outputs_using(k).len() > 1 {
                log::warn!(
                    "feature `{}` is shape-constrained but enters {} outputs; \
                     class probabilities need not follow the constraint",
                    train.feature_names()[k],
                    store.outputs_using(k).len()
                );
            }
        }
    }
    store.set_intercepts(initial_intercepts(train.targets(), task));

    let caches: Vec<FeatureCache> = (0..n_features)
        .into_par_iter()
        .map(|k| FeatureCache::new(train.column(k), &layout.features[k]))
        .collect();

    let n = train.n_samples();
    let mut f_train = Array2::from_shape_fn((n, n_outputs), |(_, i)| store.intercepts()[i]);
    let mut f_valid =
        valid.map(|v| Array2::from_shape_fn((v.n_samples(), n_outputs), |(_, i)| store.intercepts()[i]));
    let mut g = Array2::zeros((n, n_outputs));
    let mut h = Array2::zeros((n, n_outputs));

    let initial_train_loss = loss_from_raw(train.targets(), f_train.view(), task);
    let initial_valid_loss = valid
        .zip(f_valid.as_ref())
        .map(|(v, f)| loss_from_raw(v.targets(), f.view(), task));

    let mut snapshots = Snapshots::new(&store, config.snapshot_every);
    let mut best_loss = initial_valid_loss.unwrap_or(f64::INFINITY);
    let mut best_iteration = 0;
    let mut records = Vec::new();
    let mut iterations_run = 0;
    let params = config.search_params();
    let nu = config.learning_rate;

    for iteration in 1..=config.max_iterations {
        derivatives_into(train.targets(), f_train.view(), task, &mut g, &mut h);

        let chosen: Vec<Option<SplitCandidate>> = (0..n_outputs)
            .map(|i| {
                let gi = g.column(i).to_vec();
                let hi = h.column(i).to_vec();
                let per_feature: Vec<Option<SplitCandidate>> = (0..n_features)
                    .into_par_iter()
                    .map(|k| {
                        if !store.allowed(i, k) {
                            return None;
                        }
                        FeatureSearch {
                            output: i,
                            feature: k,
                            bins: &layout.features[k],
                            constraint: constraints.features[k],
                            shape: store.shape(i, k),
                            cache: &caches[k],
                            params,
                        }
                        .best(&gi, &hi)
                    })
                    .collect();
                per_feature
                    .into_iter()
                    .flatten()
                    .fold(None, |best: Option<SplitCandidate>, c| match best {
                        Some(b) if b.gain >= c.gain => Some(b),
                        _ => Some(c),
                    })
            })
            .collect();

        let mut iteration_records = Vec::with_capacity(n_outputs);
        for (i, cand) in chosen.iter().enumerate() {
            let record = LogRecord::from_candidate(iteration, i, cand.as_ref());
            rollback::apply_record(&mut store, &record, nu)?;
            if let Some(c) = cand {
                let origin = layout.features[c.feature].min;
                apply_to_predictions(&mut f_train, train, c, origin, nu);
                if let (Some(fv), Some(v)) = (f_valid.as_mut(), valid) {
                    apply_to_predictions(fv, v, c, origin, nu);
                }
            }
            iteration_records.push(record);
        }

        let train_loss = loss_from_raw(train.targets(), f_train.view(), task);
        if !train_loss.is_finite() {
            return Err(Error::Numeric(format!("training loss became {train_loss} at iteration {iteration}")));
        }
        let valid_loss = valid
            .zip(f_valid.as_ref())
            .map(|(v, f)| loss_from_raw(v.targets(), f.view(), task));
        for r in &mut iteration_records {
            r.train_loss = train_loss;
            r.valid_loss = valid_loss;
        }
        records.extend(iteration_records);
        iterations_run = iteration;

        if let Some(vl) = valid_loss {
            if vl < best_loss {
                best_loss = vl;
                best_iteration = iteration;
            }
        } else {
            best_iteration = iteration;
        }
        snapshots.observe(iteration, &store, best_iteration);
        observer(iteration, &store);

        if let Some(patience) = config.early_stopping_patience {
            if iteration - best_iteration >= patience {
                break;
            }
        }
        if chosen.iter().all(Option::is_none) {
            log::info!("no candidate improves the loss; stopping at iteration {iteration}");
            break;
        }
    }

    if best_iteration != iterations_run {
        store = snapshots.rollback_to(best_iteration, &records, nu)?;
    }
    let acc = uncertainty::accumulate(&store, train)?;
    store.set_se_accumulators(acc);

    Ok(TrainOutput {
        model: store,
        log: TrainingLog {
            records,
            initial_train_loss,
            initial_valid_loss,
            best_iteration,
            iterations_run,
        },
    })
}

/// Adds the applied monomial to cached prediction functions. `origin` is
/// the centre of global terms.
fn apply_to_predictions(f: &mut Array2<f64>, data: &Dataset, c: &SplitCandidate, origin: f64, nu: f64) {
    let col = data.column(c.feature);
    let d = c.degree as i32;
    match c.kind {
        CandidateKind::Split { threshold } => {
            let (l, r) = (nu * c.gamma_left, nu * c.gamma_right);
            for (n, &x) in col.iter().enumerate() {
                let scale = if x < threshold { l } else { r };
                f[[n, c.output]] += scale * (x - threshold).powi(d);
            }
        }
        CandidateKind::Global => {
            let s = nu * c.gamma_left;
            for (n, &x) in col.iter().enumerate() {
                f[[n, c.output]] += s * (x - origin).powi(d);
            }
        }
    }
}
