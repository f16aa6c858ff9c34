//! Dataset ingestion, quantile binning and the binned-variable transform.
//!
//! Features are stored column-major since every hot loop in training scans
//! one feature at a time. Bin edges are interior thresholds only; the
//! outermost bins are implicitly open towards -inf and +inf.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Binary,
    Multiclass { n_classes: usize },
}

impl Task {
    /// Number of prediction functions `F_i`.
    pub fn n_outputs(&self) -> usize {
        match self {
            Task::Regression | Task::Binary => 1,
            Task::Multiclass { n_classes } => *n_classes,
        }
    }

    pub fn is_classification(&self) -> bool {
        !matches!(self, Task::Regression)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Regression => "regression",
            Task::Binary => "binary",
            Task::Multiclass { .. } => "multiclass",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

/// An in-memory, validated tabular dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    targets: Vec<f64>,
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
    target_name: String,
    task: Task,
}

impl Dataset {
    /// Builds a dataset from feature columns. Multi-class targets are class
    /// indices stored as floats.
    pub fn new(
        columns: Vec<Vec<f64>>,
        targets: Vec<f64>,
        feature_names: Vec<String>,
        feature_kinds: Vec<FeatureKind>,
        target_name: impl Into<String>,
        task: Task,
    ) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Shape("a dataset needs at least one feature".into()));
        }
        if columns.len() != feature_names.len() || columns.len() != feature_kinds.len() {
            return Err(Error::Shape(format!(
                "{} columns but {} names and {} kinds",
                columns.len(),
                feature_names.len(),
                feature_kinds.len()
            )));
        }
        let n = targets.len();
        for (k, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::Shape(format!(
                    "column `{}` has {} rows, expected {n}",
                    feature_names[k],
                    col.len()
                )));
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row,
                    column: feature_names[k].clone(),
                    value: col[row].to_string(),
                });
            }
        }
        let target_name = target_name.into();
        validate_targets(&targets, task, &target_name)?;
        Ok(Self {
            columns,
            targets,
            feature_names,
            feature_kinds,
            target_name,
            task,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn row(&self, n: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[n]).collect()
    }

    /// Rows selected by `indices`, in that order. The task is kept as is, so
    /// a subset may lack some classes.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
            target_name: self.target_name.clone(),
            task: self.task,
        }
    }

    /// Writes features followed by the target column. Values use the
    /// shortest representation that parses back to the same `f64`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.target_name);
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for n in 0..self.n_samples() {
            record.clear();
            record.extend(self.columns.iter().map(|c| c[n].to_string()));
            record.push(self.targets[n].to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn validate_targets(targets: &[f64], task: Task, name: &str) -> Result<()> {
    if let Some(row) = targets.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row,
            column: name.to_string(),
            value: targets[row].to_string(),
        });
    }
    match task {
        Task::Regression => {}
        Task::Binary => {
            if let Some(row) = targets.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidTarget(format!(
                    "row {row}: binary target must be 0 or 1, got {}",
                    targets[row]
                )));
            }
        }
        Task::Multiclass { n_classes } => {
            if n_classes < 2 {
                return Err(Error::InvalidTarget(
                    "multiclass task needs at least two classes".into(),
                ));
            }
            for (row, &v) in targets.iter().enumerate() {
                if v < 0.0 || v.fract() != 0.0 || v >= n_classes as f64 {
                    return Err(Error::InvalidTarget(format!(
                        "row {row}: class label {v} outside 0..{n_classes}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Which kind of learning problem a CSV target column describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    Binary,
    Multiclass,
}

/// Reads a header-first CSV file. Every column other than `target` becomes
/// a feature; columns with at most two distinct values, or listed in
/// `categorical`, are typed categorical.
pub fn load_csv(
    path: impl AsRef<Path>,
    target: &str,
    kind: TaskKind,
    categorical: &[String],
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target)
        .ok_or_else(|| Error::MissingColumn(target.to_string()))?;
    for c in categorical {
        if !headers.iter().any(|h| h == c) {
            return Err(Error::MissingColumn(c.clone()));
        }
    }

    let n_features = headers.len() - 1;
    if n_features == 0 {
        return Err(Error::Shape("the file has no feature columns".into()));
    }
    let mut columns = vec![Vec::new(); n_features];
    let mut targets = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let mut k = 0;
        for (j, cell) in record.iter().enumerate() {
            let v = parse_cell(cell, row, &headers[j])?;
            if j == target_idx {
                targets.push(v);
            } else {
                columns[k].push(v);
                k += 1;
            }
        }
    }
    if targets.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let feature_kinds = columns
        .iter()
        .zip(&feature_names)
        .map(|(col, name)| {
            if categorical.contains(name) || distinct_count(col, 3) <= 2 {
                FeatureKind::Categorical
            } else {
                FeatureKind::Continuous
            }
        })
        .collect();

    let task = match kind {
        TaskKind::Regression => Task::Regression,
        TaskKind::Binary => Task::Binary,
        TaskKind::Multiclass => {
            let n_classes = infer_classes(&targets)?;
            Task::Multiclass { n_classes }
        }
    };
    Dataset::new(columns, targets, feature_names, feature_kinds, target, task)
}

/// Reads the columns named in `features`, in that order, from a
/// header-first CSV file. A column called `ignore` is skipped; any other
/// column not in `features` is an error. A header-only file yields empty
/// columns.
pub fn read_feature_columns(
    path: impl AsRef<Path>,
    features: &[String],
    ignore: Option<&str>,
) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut slot = vec![None; headers.len()];
    for (j, h) in headers.iter().enumerate() {
        match features.iter().position(|f| f == h) {
            Some(k) => slot[j] = Some(k),
            None if Some(h.as_str()) == ignore => {}
            None => return Err(Error::UnexpectedColumn(h.clone())),
        }
    }
    for f in features {
        if !headers.contains(f) {
            return Err(Error::MissingColumn(f.clone()));
        }
    }
    let mut columns = vec![Vec::new(); features.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (j, cell) in record.iter().enumerate() {
            if let Some(k) = slot[j] {
                columns[k].push(parse_cell(cell, row, &headers[j])?);
            }
        }
    }
    Ok(columns)
}

pub(crate) fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| Error::Unparseable {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    })?;
    if !v.is_finite() {
        return Err(Error::NonFinite {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        });
    }
    Ok(v)
}

/// Distinct values, counting at most up to `cap`.
fn distinct_count(values: &[f64], cap: usize) -> usize {
    let mut seen: Vec<f64> = Vec::with_capacity(cap);
    for &v in values {
        if !seen.contains(&v) {
            seen.push(v);
            if seen.len() >= cap {
                break;
            }
        }
    }
    seen.len()
}

fn infer_classes(targets: &[f64]) -> Result<usize> {
    let mut present = BTreeSet::new();
    for (row, &v) in targets.iter().enumerate() {
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::InvalidTarget(format!(
                "row {row}: class label {v} is not a non-negative integer"
            )));
        }
        present.insert(v as usize);
    }
    let n_classes = present.iter().next_back().map_or(0, |m| m + 1);
    if present.len() != n_classes {
        let missing: Vec<usize> = (0..n_classes).filter(|c| !present.contains(c)).collect();
        return Err(Error::InvalidTarget(format!(
            "classes {missing:?} never appear in the data"
        )));
    }
    Ok(n_classes)
}

/// Quantile bin edges for one feature.
///
/// When the feature has no more distinct values than `n_bins`, each value
/// gets its own bin. Otherwise the edge for rank `i / n_bins` sits halfway
/// between the two sorted samples straddling that rank; straddling pairs of
/// equal values produce no edge.
pub fn build_bins(values: &[f64], n_bins: usize) -> Vec<f64> {
    if values.is_empty() || n_bins < 2 {
        return Vec::new();
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut uniques = sorted.clone();
    uniques.dedup();
    if uniques.len() <= 1 {
        return Vec::new();
    }
    if uniques.len() <= n_bins {
        return uniques.windows(2).map(|w| midpoint(w[0], w[1])).collect();
    }

    let n = sorted.len();
    let mut edges: Vec<f64> = Vec::with_capacity(n_bins - 1);
    for i in 1..n_bins {
        let below = i * n / n_bins;
        if below == 0 || below >= n {
            continue;
        }
        let (lo, hi) = (sorted[below - 1], sorted[below]);
        if lo < hi {
            let e = midpoint(lo, hi);
            if edges.last().is_none_or(|&last| e > last) {
                edges.push(e);
            }
        }
    }
    edges
}

/// A threshold in `(lo, hi]`, so that `lo` falls in the left bin and `hi`
/// in the right one under right-open bins.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m > lo && m <= hi {
        m
    } else {
        hi
    }
}

/// Keeps every `step`-th fine edge, where `step = ceil(fine bins / n_bins)`,
/// so coarse knots are always fine knots.
pub fn coarsen(fine_edges: &[f64], n_bins: usize) -> Vec<f64> {
    let n_fine_bins = fine_edges.len() + 1;
    let step = n_fine_bins.div_ceil(n_bins.max(1)).max(1);
    fine_edges
        .iter()
        .skip(step - 1)
        .step_by(step)
        .copied()
        .collect()
}

/// Index of the bin containing `x`: the `b` with `edges[b-1] <= x < edges[b]`
/// (zero-based; bin 0 is everything below the first edge).
pub fn assign_bin(x: f64, edges: &[f64]) -> usize {
    edges.partition_point(|&e| e <= x)
}

/// The binned-variable transform `x*` of `x` for zero-based bin `b`.
///
/// Zero below the bin; the raw value inside the first bin; the offset from
/// the bin's lower edge inside any later bin; the bin's upper edge above it.
/// The last bin has no upper edge and so never saturates.
pub fn bin_transform(x: f64, edges: &[f64], b: usize) -> f64 {
    let lower = if b == 0 { f64::NEG_INFINITY } else { edges[b - 1] };
    let upper = edges.get(b).copied().unwrap_or(f64::INFINITY);
    if x < lower {
        0.0
    } else if x < upper {
        if b == 0 {
            x
        } else {
            x - lower
        }
    } else {
        upper
    }
}

/// Bin counts per degree class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitScheme {
    pub n_bins_degree0: usize,
    pub n_bins_higher: usize,
}

impl Default for SplitScheme {
    fn default() -> Self {
        Self {
            n_bins_degree0: 256,
            n_bins_higher: 20,
        }
    }
}

impl SplitScheme {
    pub fn validate(&self) -> Result<()> {
        if self.n_bins_higher == 0 || self.n_bins_higher > self.n_bins_degree0 {
            return Err(Error::Config(format!(
                "bin counts must satisfy 1 <= n_bins_higher ({}) <= n_bins_degree0 ({})",
                self.n_bins_higher, self.n_bins_degree0
            )));
        }
        Ok(())
    }
}

/// Fine and coarse grids of one feature, plus its observed range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBins {
    pub kind: FeatureKind,
    pub fine_edges: Vec<f64>,
    pub coarse_edges: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

impl FeatureBins {
    pub fn fit(values: &[f64], kind: FeatureKind, scheme: &SplitScheme) -> Self {
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let (fine_edges, coarse_edges) = match kind {
            FeatureKind::Categorical => {
                let edges = build_bins(values, usize::MAX);
                (edges.clone(), edges)
            }
            FeatureKind::Continuous => {
                let fine = build_bins(values, scheme.n_bins_degree0);
                let coarse = coarsen(&fine, scheme.n_bins_higher);
                (fine, coarse)
            }
        };
        Self {
            kind,
            fine_edges,
            coarse_edges,
            min,
            max,
        }
    }

    pub fn n_fine(&self) -> usize {
        self.fine_edges.len() + 1
    }

    pub fn n_coarse(&self) -> usize {
        self.coarse_edges.len() + 1
    }

    pub fn fine_bin(&self, x: f64) -> usize {
        assign_bin(x, &self.fine_edges)
    }

    pub fn coarse_bin(&self, x: f64) -> usize {
        assign_bin(x, &self.coarse_edges)
    }

    /// Origin of the local coordinate of coarse bin `c`; the first bin is
    /// anchored at the observed minimum.
    pub fn coarse_lower(&self, c: usize) -> f64 {
        if c == 0 {
            self.min
        } else {
            self.coarse_edges[c - 1]
        }
    }

    /// Right end of coarse bin `c` within the observed range.
    pub fn coarse_upper(&self, c: usize) -> f64 {
        self.coarse_edges.get(c).copied().unwrap_or(self.max)
    }
}

/// Per-feature bin grids for a whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinLayout {
    pub features: Vec<FeatureBins>,
}

impl BinLayout {
    pub fn fit(data: &Dataset, scheme: &SplitScheme) -> Self {
        let features = data
            .columns()
            .iter()
            .zip(data.feature_kinds())
            .map(|(col, &kind)| FeatureBins::fit(col, kind, scheme))
            .collect();
        Self { features }
    }
}

/// Row indices of a train/validation/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles rows with a seeded ChaCha stream, then carves out validation and
/// test shares. Classification tasks are stratified by class. Each part is
/// returned in ascending row order.
pub fn partition(data: &Dataset, valid_frac: f64, test_frac: f64, seed: u64) -> Partition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = match data.task() {
        Task::Regression => vec![(0..data.n_samples()).collect()],
        Task::Binary => class_groups(data.targets(), 2),
        Task::Multiclass { n_classes } => class_groups(data.targets(), n_classes),
    };
    let mut parts = Partition {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
    };
    for mut group in groups {
        group.shuffle(&mut rng);
        let n = group.len() as f64;
        let n_test = (test_frac * n).round() as usize;
        let n_valid = ((valid_frac * n).round() as usize).min(group.len() - n_test);
        parts.test.extend_from_slice(&group[..n_test]);
        parts.valid.extend_from_slice(&group[n_test..n_test + n_valid]);
        parts.train.extend_from_slice(&group[n_test + n_valid..]);
    }
    parts.train.sort_unstable();
    parts.valid.sort_unstable();
    parts.test.sort_unstable();
    parts
}

fn class_groups(targets: &[f64], n_classes: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); n_classes];
    for (i, &y) in targets.iter().enumerate() {
        groups[y as usize].push(i);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_regression_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,y\n1,10,0.5\n2,20,1.5\n3,30,2.5\n4,40,3.5\n");
        let ds = load_csv(&p, "y", TaskKind::Regression, &[]).unwrap();
        assert_eq!(ds.n_samples(), 4);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.task(), Task::Regression);
        assert_eq!(ds.column(1), &[10.0, 20.0, 30.0, 40.0]);
        assert_eq!(ds.targets(), &[0.5, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn infers_three_classes() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x,y\n1,0\n2,1\n3,2\n4,1\n");
        let ds = load_csv(&p, "y", TaskKind::Multiclass, &[]).unwrap();
        assert_eq!(ds.task(), Task::Multiclass { n_classes: 3 });
    }

    #[test]
    fn missing_class_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x,y\n1,0\n2,2\n3,2\n");
        assert!(matches!(
            load_csv(&p, "y", TaskKind::Multiclass, &[]),
            Err(Error::InvalidTarget(_))
        ));
    }

    #[test]
    fn nan_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,y\n1,2,3\n4,NaN,6\n");
        match load_csv(&p, "y", TaskKind::Regression, &[]) {
            Err(Error::NonFinite { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "b");
            }
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn garbage_cell_is_unparseable() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,y\n1,2\nabc,3\n");
        assert!(matches!(
            load_csv(&p, "y", TaskKind::Regression, &[]),
            Err(Error::Unparseable { row: 1, .. })
        ));
    }

    #[test]
    fn missing_target_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b\n1,2\n");
        assert!(matches!(
            load_csv(&p, "y", TaskKind::Regression, &[]),
            Err(Error::MissingColumn(_))
        ));
    }

    #[test]
    fn categorical_inference_and_override() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "bin,cont,code,y\n0,1.5,1,1\n1,2.5,2,2\n0,3.5,3,3\n");
        let ds = load_csv(&p, "y", TaskKind::Regression, &["code".to_string()]).unwrap();
        assert_eq!(
            ds.feature_kinds(),
            &[
                FeatureKind::Categorical,
                FeatureKind::Continuous,
                FeatureKind::Categorical
            ]
        );
    }

    #[test]
    fn median_edge() {
        assert_eq!(build_bins(&[1.0, 2.0, 3.0, 4.0], 2), vec![2.5]);
    }

    #[test]
    fn constant_feature_has_no_edges() {
        assert!(build_bins(&[7.0; 20], 256).is_empty());
    }

    #[test]
    fn few_levels_get_one_bin_each() {
        let v: Vec<f64> = (0..300).map(|i| (i % 3) as f64).collect();
        let edges = build_bins(&v, 256);
        assert_eq!(edges, vec![0.5, 1.5]);
    }

    #[test]
    fn coarse_grid_is_subset() {
        let v: Vec<f64> = (0..5000).map(|i| ((i * 7919) % 5003) as f64).collect();
        let fine = build_bins(&v, 256);
        assert_eq!(fine.len(), 255);
        let coarse = coarsen(&fine, 20);
        assert_eq!(coarse.len(), 19);
        assert!(coarse.iter().all(|c| fine.contains(c)));
    }

    #[test]
    fn transform_cases() {
        let edges = [2.0];
        assert_eq!(bin_transform(1.0, &edges, 1), 0.0);
        assert_eq!(bin_transform(3.0, &edges, 1), 1.0);
        assert_eq!(bin_transform(5.0, &edges, 0), 2.0);
        assert_eq!(bin_transform(1.5, &edges, 0), 1.5);
        assert_eq!(bin_transform(1e9, &edges, 1), 1e9 - 2.0);
    }

    #[test]
    fn bin_assignment() {
        assert_eq!(assign_bin(2.0, &[2.0]), 1);
        assert_eq!(assign_bin(1.9, &[2.0]), 0);
        assert_eq!(assign_bin(-1e9, &[2.0, 3.0]), 0);
        assert_eq!(assign_bin(5.0, &[]), 0);
    }

    #[test]
    fn partition_sizes_and_determinism() {
        let cols = vec![(0..100).map(f64::from).collect::<Vec<_>>()];
        let y: Vec<f64> = (0..100).map(|i| (i % 2) as f64).collect();
        let ds = Dataset::new(
            cols,
            y,
            vec!["x".into()],
            vec![FeatureKind::Continuous],
            "y",
            Task::Binary,
        )
        .unwrap();
        let p = partition(&ds, 0.1, 0.2, 3);
        assert_eq!((p.train.len(), p.valid.len(), p.test.len()), (70, 10, 20));
        let positives = p.test.iter().filter(|&&i| ds.targets()[i] == 1.0).count();
        assert_eq!(positives, 10);
        assert_eq!(p, partition(&ds, 0.1, 0.2, 3));
        assert_ne!(p.test, partition(&ds, 0.1, 0.2, 4).test);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let cols = vec![vec![0.1 + 0.2, 1e-300, -3.5], vec![std::f64::consts::PI, 2.0, 7.0]];
        let ds = Dataset::new(
            cols,
            vec![1.0 / 3.0, 2.0, 3.0],
            vec!["a".into(), "b".into()],
            vec![FeatureKind::Continuous; 2],
            "y",
            Task::Regression,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.csv");
        ds.write_csv(&p).unwrap();
        let back = load_csv(&p, "y", TaskKind::Regression, &[]).unwrap();
        for k in 0..2 {
            let a: Vec<u64> = ds.column(k).iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.column(k).iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
    }

    proptest! {
        #[test]
        fn every_x_lands_in_exactly_one_bin(
            mut edges in proptest::collection::vec(-100.0f64..100.0, 0..20),
            x in -200.0f64..200.0,
        ) {
            edges.sort_by(f64::total_cmp);
            edges.dedup();
            let b = assign_bin(x, &edges);
            let hits = (0..=edges.len())
                .filter(|&j| {
                    let lo = if j == 0 { f64::NEG_INFINITY } else { edges[j - 1] };
                    let hi = edges.get(j).copied().unwrap_or(f64::INFINITY);
                    lo <= x && x < hi
                })
                .collect::<Vec<_>>();
            prop_assert_eq!(hits, vec![b]);
        }

        #[test]
        fn edges_strictly_inside_range_and_bins_nonempty(
            values in proptest::collection::vec(-50i32..50, 1..400),
            n_bins in 2usize..64,
        ) {
            let values: Vec<f64> = values.into_iter().map(|v| f64::from(v) * 0.25).collect();
            let edges = build_bins(&values, n_bins);
            prop_assert!(edges.len() < n_bins);
            prop_assert!(edges.windows(2).all(|w| w[0] < w[1]));
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(edges.iter().all(|&e| lo < e && e <= hi));
            let mut counts = vec![0usize; edges.len() + 1];
            for &v in &values {
                counts[assign_bin(v, &edges)] += 1;
            }
            prop_assert!(counts.iter().all(|&c| c > 0));
        }
    }
}
