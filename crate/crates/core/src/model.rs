//! The global parameter store.
//!
//! Every shape function `f_ik` is held as two layers:
//!
//! * a step layer with one value per fine bin (degree-0 splits and the
//!   global constant), and
//! * a cubic per coarse bin, stored in the local coordinate
//!   `t = x - lower(bin)` where the first bin is anchored at the observed
//!   feature minimum.
//!
//! Boosting updates of the form `gamma * (x - u)^d` are expanded into the
//! local coordinates of every affected coarse bin, so no trees are kept.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{assign_bin, Dataset, FeatureBins, FeatureKind, Task};
use crate::error::{Error, Result};
use crate::loss::link_apply;

pub const FORMAT_VERSION: &str = "1";

/// Highest polynomial degree of a shape function piece.
pub const MAX_DEGREE: usize = 3;

/// Shape restrictions for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConstraint {
    /// Continuity order `S`: -1 allows jumps, 0..=2 makes `f` (and its
    /// first `S` derivatives) continuous.
    #[serde(rename = "S")]
    pub smoothness: i8,
    #[serde(rename = "D")]
    pub max_degree: u8,
    /// Required sign of `f'`; 0 leaves it free.
    pub monotone: i8,
    /// Required sign of `f''`; 0 leaves it free.
    pub curvature: i8,
}

impl FeatureConstraint {
    pub const fn free(max_degree: u8) -> Self {
        Self {
            smoothness: -1,
            max_degree,
            monotone: 0,
            curvature: 0,
        }
    }

    /// Whether degree `d` is learnt as one global parameter rather than
    /// split at thresholds.
    pub fn is_global(&self, d: usize) -> bool {
        (d as i64) <= i64::from(self.smoothness)
    }

    pub fn is_shape_constrained(&self) -> bool {
        self.monotone != 0 || self.curvature != 0
    }

    fn problems(&self, name: &str, kind: FeatureKind) -> Vec<String> {
        let mut out = Vec::new();
        if usize::from(self.max_degree) > MAX_DEGREE {
            out.push(format!("feature `{name}`: D = {} exceeds 3", self.max_degree));
        }
        if !(-1..=2).contains(&self.smoothness) {
            out.push(format!("feature `{name}`: S = {} outside -1..=2", self.smoothness));
        }
        if i16::from(self.smoothness) > i16::from(self.max_degree) - 1 {
            out.push(format!(
                "feature `{name}`: S = {} requires D >= {}",
                self.smoothness,
                self.smoothness + 1
            ));
        }
        if !(-1..=1).contains(&self.monotone) {
            out.push(format!(
                "feature `{name}`: monotone = {} must be -1, 0 or +1",
                self.monotone
            ));
        }
        if !(-1..=1).contains(&self.curvature) {
            out.push(format!(
                "feature `{name}`: curvature = {} must be -1, 0 or +1",
                self.curvature
            ));
        }
        if self.curvature != 0 && (self.smoothness < 0 || self.max_degree < 2) {
            out.push(format!(
                "feature `{name}`: a curvature constraint needs S >= 0 and D >= 2"
            ));
        }
        if kind == FeatureKind::Categorical && (self.max_degree > 0 || self.curvature != 0) {
            out.push(format!(
                "feature `{name}`: categorical features only take degree-0 terms"
            ));
        }
        out
    }
}

/// Per-feature constraints plus the output x feature allow-mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub features: Vec<FeatureConstraint>,
    /// `allow_mask[i][k]`: feature `k` may enter output `i`.
    pub allow_mask: Vec<Vec<bool>>,
}

impl ConstraintSpec {
    /// Every feature free with degree `max_degree` in every output;
    /// categorical features are held at degree 0.
    pub fn uniform(kinds: &[FeatureKind], n_outputs: usize, base: FeatureConstraint) -> Self {
        let features = kinds
            .iter()
            .map(|&kind| match kind {
                FeatureKind::Continuous => base,
                FeatureKind::Categorical => FeatureConstraint {
                    smoothness: -1,
                    max_degree: 0,
                    monotone: base.monotone,
                    curvature: 0,
                },
            })
            .collect();
        Self {
            features,
            allow_mask: vec![vec![true; kinds.len()]; n_outputs],
        }
    }

    pub fn allowed(&self, i: usize, k: usize) -> bool {
        self.allow_mask[i][k]
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self, names: &[String], kinds: &[FeatureKind], n_outputs: usize) -> Result<()> {
        let mut problems = Vec::new();
        if self.features.len() != names.len() {
            problems.push(format!(
                "{} feature constraints for {} features",
                self.features.len(),
                names.len()
            ));
        }
        if self.allow_mask.len() != n_outputs
            || self.allow_mask.iter().any(|row| row.len() != names.len())
        {
            problems.push(format!("allow mask must be {n_outputs} x {}", names.len()));
        }
        for ((c, name), &kind) in self.features.iter().zip(names).zip(kinds) {
            problems.extend(c.problems(name, kind));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Constraint(problems.join("; ")))
        }
    }
}

/// Which piece to use when `x` sits exactly on a knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

fn locate(x: f64, edges: &[f64], side: Side) -> usize {
    match side {
        Side::Right => assign_bin(x, edges),
        Side::Left => edges.partition_point(|&e| e < x),
    }
}

/// Coefficients of `(t + delta)^d` in powers of `t`.
pub fn shifted_monomial(d: usize, delta: f64) -> [f64; 4] {
    const BINOM: [[f64; 4]; 4] = [
        [1.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, 0.0],
        [1.0, 2.0, 1.0, 0.0],
        [1.0, 3.0, 3.0, 1.0],
    ];
    let mut out = [0.0; 4];
    let mut pow = 1.0;
    // j runs downward so delta^(d-j) builds up incrementally.
    for j in (0..=d).rev() {
        out[j] = BINOM[d][j] * pow;
        pow *= delta;
    }
    out
}

/// Value (`order` 0) or derivative of a cubic in local coordinates.
pub fn poly_eval(c: &[f64; 4], t: f64, order: usize) -> f64 {
    match order {
        0 => c[0] + t * (c[1] + t * (c[2] + t * c[3])),
        1 => c[1] + t * (2.0 * c[2] + t * 3.0 * c[3]),
        2 => 2.0 * c[2] + 6.0 * c[3] * t,
        _ => 0.0,
    }
}

/// One `f_ik`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeFunction {
    pub step_values: Vec<f64>,
    pub poly_coeffs: Vec<[f64; 4]>,
}

impl ShapeFunction {
    pub fn zeros(bins: &FeatureBins) -> Self {
        Self {
            step_values: vec![0.0; bins.n_fine()],
            poly_coeffs: vec![[0.0; 4]; bins.n_coarse()],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.step_values.iter().all(|&v| v == 0.0)
            && self.poly_coeffs.iter().flatten().all(|&v| v == 0.0)
    }

    /// `order`-th derivative at `x` using the piece on `side` of any knot.
    pub fn eval(&self, bins: &FeatureBins, x: f64, order: usize, side: Side) -> f64 {
        let c = locate(x, &bins.coarse_edges, side);
        let t = x - bins.coarse_lower(c);
        let poly = poly_eval(&self.poly_coeffs[c], t, order);
        if order == 0 {
            self.step_values[locate(x, &bins.fine_edges, side)] + poly
        } else {
            poly
        }
    }
}

/// Per-bin sums of `h * (x*)^(2d)`, the diagonal Hessian of each parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeAccumulator {
    /// Degree 0, one entry per fine bin.
    pub step: Vec<f64>,
    /// Degrees 1..=3, one row per coarse bin, in the bin's local coordinate.
    pub poly: Vec<[f64; 3]>,
    /// Degrees 0..=3 of the single global term, `x* = x - min`.
    pub global: [f64; 4],
}

/// Static description of one input feature inside a model.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMeta {
    pub name: String,
    pub bins: FeatureBins,
    pub constraint: FeatureConstraint,
}

/// The trained (or zero-initialised) additive model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    task: Task,
    target_name: String,
    features: Vec<FeatureMeta>,
    allow_mask: Vec<Vec<bool>>,
    intercepts: Vec<f64>,
    shapes: Vec<Vec<ShapeFunction>>,
    se_accumulators: Option<Vec<Vec<SeAccumulator>>>,
}

impl ParameterStore {
    /// A zero model over the given grids.
    pub fn new(
        task: Task,
        target_name: impl Into<String>,
        names: &[String],
        bins: &[FeatureBins],
        constraints: &ConstraintSpec,
    ) -> Result<Self> {
        let kinds: Vec<FeatureKind> = bins.iter().map(|b| b.kind).collect();
        if names.len() != bins.len() {
            return Err(Error::Shape(format!(
                "{} feature names for {} bin grids",
                names.len(),
                bins.len()
            )));
        }
        constraints.validate(names, &kinds, task.n_outputs())?;
        let features: Vec<FeatureMeta> = names
            .iter()
            .zip(bins)
            .zip(&constraints.features)
            .map(|((name, bins), &constraint)| FeatureMeta {
                name: name.clone(),
                bins: bins.clone(),
                constraint,
            })
            .collect();
        let shapes = (0..task.n_outputs())
            .map(|_| features.iter().map(|f| ShapeFunction::zeros(&f.bins)).collect())
            .collect();
        Ok(Self {
            task,
            target_name: target_name.into(),
            features,
            allow_mask: constraints.allow_mask.clone(),
            intercepts: vec![0.0; task.n_outputs()],
            shapes,
            se_accumulators: None,
        })
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_outputs(&self) -> usize {
        self.task.n_outputs()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    pub fn feature(&self, k: usize) -> &FeatureMeta {
        &self.features[k]
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn allowed(&self, i: usize, k: usize) -> bool {
        self.allow_mask[i][k]
    }

    pub fn allow_mask(&self) -> &[Vec<bool>] {
        &self.allow_mask
    }

    /// Outputs whose prediction function uses feature `k`.
    pub fn outputs_using(&self, k: usize) -> Vec<usize> {
        (0..self.n_outputs()).filter(|&i| self.allowed(i, k)).collect()
    }

    pub fn constraints(&self) -> ConstraintSpec {
        ConstraintSpec {
            features: self.features.iter().map(|f| f.constraint).collect(),
            allow_mask: self.allow_mask.clone(),
        }
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn set_intercepts(&mut self, intercepts: Vec<f64>) {
        assert_eq!(intercepts.len(), self.n_outputs());
        self.intercepts = intercepts;
    }

    pub fn shape(&self, i: usize, k: usize) -> &ShapeFunction {
        &self.shapes[i][k]
    }

    pub fn se_accumulators(&self) -> Option<&[Vec<SeAccumulator>]> {
        self.se_accumulators.as_deref()
    }

    pub fn set_se_accumulators(&mut self, acc: Vec<Vec<SeAccumulator>>) {
        self.se_accumulators = Some(acc);
    }

    /// `f_ik(x)`. Outside the observed range the boundary pieces extrapolate.
    pub fn evaluate_shape(&self, i: usize, k: usize, x: f64) -> f64 {
        self.shapes[i][k].eval(&self.features[k].bins, x, 0, Side::Right)
    }

    /// `f'_ik(x)` (`order` 1) or `f''_ik(x)` (`order` 2); at a knot the
    /// right-hand derivative.
    pub fn evaluate_derivative(&self, i: usize, k: usize, x: f64, order: usize) -> f64 {
        assert!(order == 1 || order == 2, "derivative order must be 1 or 2");
        self.shapes[i][k].eval(&self.features[k].bins, x, order, Side::Right)
    }

    /// One-sided value or derivative, for inspecting knots.
    pub fn evaluate_one_sided(&self, i: usize, k: usize, x: f64, order: usize, side: Side) -> f64 {
        self.shapes[i][k].eval(&self.features[k].bins, x, order, side)
    }

    /// Largest one-sided gap of `f` (order 0), `f'` or `f''` over all knots
    /// of both grids.
    pub fn max_knot_gap(&self, i: usize, k: usize, order: usize) -> f64 {
        let bins = &self.features[k].bins;
        bins.fine_edges
            .iter()
            .chain(&bins.coarse_edges)
            .map(|&u| {
                let l = self.evaluate_one_sided(i, k, u, order, Side::Left);
                let r = self.evaluate_one_sided(i, k, u, order, Side::Right);
                (l - r).abs()
            })
            .fold(0.0, f64::max)
    }

    fn check_pair(&self, i: usize, k: usize) -> Result<()> {
        if i >= self.n_outputs() || k >= self.n_features() {
            return Err(Error::Shape(format!("no output {i} / feature {k} in this model")));
        }
        if !self.allowed(i, k) {
            return Err(Error::Constraint(format!(
                "feature `{}` is not allowed in output {i}",
                self.features[k].name
            )));
        }
        Ok(())
    }

    /// Adds `nu * gamma_left * (x - u)^d` below the knot `u` and
    /// `nu * gamma_right * (x - u)^d` above it. Degree 0 splits live on
    /// the fine grid, higher degrees on the coarse grid.
    #[allow(clippy::too_many_arguments)]
    pub fn accumulate_update(
        &mut self,
        i: usize,
        k: usize,
        d: usize,
        threshold: f64,
        gamma_left: f64,
        gamma_right: f64,
        nu: f64,
    ) -> Result<()> {
        self.check_pair(i, k)?;
        let meta = &self.features[k];
        if d > usize::from(meta.constraint.max_degree) {
            return Err(Error::Constraint(format!(
                "degree {d} exceeds D = {} of feature `{}`",
                meta.constraint.max_degree, meta.name
            )));
        }
        if meta.constraint.is_global(d) {
            return Err(Error::Constraint(format!(
                "splitting degree {d} would break C{} smoothness of feature `{}`",
                meta.constraint.smoothness, meta.name
            )));
        }
        let (edges, grid) = if d == 0 {
            (&meta.bins.fine_edges, "fine")
        } else {
            (&meta.bins.coarse_edges, "coarse")
        };
        let edge = edges
            .iter()
            .position(|&e| e == threshold)
            .ok_or(Error::OffGrid {
                feature: k,
                threshold,
                grid,
            })?;
        if d == 0 {
            let left = nu * gamma_left;
            let right = nu * gamma_right;
            for (b, v) in self.shapes[i][k].step_values.iter_mut().enumerate() {
                *v += if b <= edge { left } else { right };
            }
        } else {
            let bins = meta.bins.clone();
            for (c, coeffs) in self.shapes[i][k].poly_coeffs.iter_mut().enumerate() {
                let gamma = if c <= edge { gamma_left } else { gamma_right };
                add_scaled(coeffs, nu * gamma, &shifted_monomial(d, bins.coarse_lower(c) - threshold));
            }
        }
        Ok(())
    }

    /// Adds the single monomial `nu * gamma * (x - min)^d` across the whole
    /// feature; only degrees protected by the smoothness order qualify.
    pub fn accumulate_global(&mut self, i: usize, k: usize, d: usize, gamma: f64, nu: f64) -> Result<()> {
        self.check_pair(i, k)?;
        let meta = &self.features[k];
        if !meta.constraint.is_global(d) {
            return Err(Error::Constraint(format!(
                "degree {d} is not a global term of feature `{}` (S = {})",
                meta.name, meta.constraint.smoothness
            )));
        }
        let step = nu * gamma;
        if d == 0 {
            for v in &mut self.shapes[i][k].step_values {
                *v += step;
            }
        } else {
            let bins = meta.bins.clone();
            for (c, coeffs) in self.shapes[i][k].poly_coeffs.iter_mut().enumerate() {
                add_scaled(coeffs, step, &shifted_monomial(d, bins.coarse_lower(c) - bins.min));
            }
        }
        Ok(())
    }

    /// `F_i` for one row of feature values.
    pub fn raw_row(&self, row: &[f64]) -> Vec<f64> {
        (0..self.n_outputs())
            .map(|i| {
                let mut f = self.intercepts[i];
                for (k, &x) in row.iter().enumerate() {
                    if self.allow_mask[i][k] {
                        f += self.evaluate_shape(i, k, x);
                    }
                }
                f
            })
            .collect()
    }

    /// Prediction functions and linked predictions for column-major data.
    pub fn predict_columns(&self, columns: &[Vec<f64>]) -> Result<(Array2<f64>, Array2<f64>)> {
        if columns.len() != self.n_features() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.n_features(),
                columns.len()
            )));
        }
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("ragged feature columns".into()));
        }
        let mut f = Array2::zeros((n, self.n_outputs()));
        for i in 0..self.n_outputs() {
            f.column_mut(i).fill(self.intercepts[i]);
            for (k, col) in columns.iter().enumerate() {
                if !self.allow_mask[i][k] {
                    continue;
                }
                for (n, &x) in col.iter().enumerate() {
                    f[[n, i]] += self.evaluate_shape(i, k, x);
                }
            }
        }
        let yhat = link_apply(f.view(), self.task);
        Ok((f, yhat))
    }

    pub fn predict(&self, data: &Dataset) -> Result<(Array2<f64>, Array2<f64>)> {
        self.predict_columns(data.columns())
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let doc = ModelDoc::from(self);
        let mut buf = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigitsFormatter);
        doc.serialize(&mut ser)?;
        buf.push(b'\n');
        Ok(buf)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_slice(bytes)?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Schema("missing `format_version`".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Version(version.to_string()));
        }
        let doc: ModelDoc =
            serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
        doc.into_store()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_json()?;
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::io::Read::read_to_end(
            &mut BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?),
            &mut bytes,
        )
        .map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }
}

fn add_scaled(coeffs: &mut [f64; 4], scale: f64, delta: &[f64; 4]) {
    if scale == 0.0 {
        return;
    }
    for (c, d) in coeffs.iter_mut().zip(delta) {
        *c += scale * d;
    }
}

/// Writes every float with 17 significant digits.
struct SigDigitsFormatter;

impl serde_json::ser::Formatter for SigDigitsFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureDoc {
    name: String,
    kind: FeatureKind,
    fine_edges: Vec<f64>,
    coarse_edges: Vec<f64>,
    x_min: f64,
    x_max: f64,
    #[serde(flatten)]
    constraint: FeatureConstraint,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format_version: String,
    task: String,
    outputs: usize,
    target: String,
    features: Vec<FeatureDoc>,
    allow_mask: Vec<Vec<bool>>,
    intercepts: Vec<f64>,
    shapes: Vec<Vec<ShapeFunction>>,
    se_accumulators: Option<Vec<Vec<SeAccumulator>>>,
}

impl From<&ParameterStore> for ModelDoc {
    fn from(s: &ParameterStore) -> Self {
        Self {
            format_version: FORMAT_VERSION.to_string(),
            task: s.task.name().to_string(),
            outputs: s.n_outputs(),
            target: s.target_name.clone(),
            features: s
                .features
                .iter()
                .map(|f| FeatureDoc {
                    name: f.name.clone(),
                    kind: f.bins.kind,
                    fine_edges: f.bins.fine_edges.clone(),
                    coarse_edges: f.bins.coarse_edges.clone(),
                    x_min: f.bins.min,
                    x_max: f.bins.max,
                    constraint: f.constraint,
                })
                .collect(),
            allow_mask: s.allow_mask.clone(),
            intercepts: s.intercepts.clone(),
            shapes: s.shapes.clone(),
            se_accumulators: s.se_accumulators.clone(),
        }
    }
}

impl ModelDoc {
    fn into_store(self) -> Result<ParameterStore> {
        let schema = |m: String| Err(Error::Schema(m));
        let task = match (self.task.as_str(), self.outputs) {
            ("regression", 1) => Task::Regression,
            ("binary", 1) => Task::Binary,
            ("multiclass", j) if j >= 2 => Task::Multiclass { n_classes: j },
            (t, j) => return schema(format!("task `{t}` with {j} outputs")),
        };
        let names: Vec<String> = self.features.iter().map(|f| f.name.clone()).collect();
        let bins: Vec<FeatureBins> = self
            .features
            .iter()
            .map(|f| FeatureBins {
                kind: f.kind,
                fine_edges: f.fine_edges.clone(),
                coarse_edges: f.coarse_edges.clone(),
                min: f.x_min,
                max: f.x_max,
            })
            .collect();
        for (b, name) in bins.iter().zip(&names) {
            let sorted = |e: &[f64]| e.windows(2).all(|w| w[0] < w[1]);
            if !(b.min.is_finite() && b.max.is_finite() && b.min <= b.max) {
                return schema(format!("feature `{name}`: bad range"));
            }
            if !sorted(&b.fine_edges) || !sorted(&b.coarse_edges) {
                return schema(format!("feature `{name}`: edges not strictly increasing"));
            }
            if b.fine_edges.iter().chain(&b.coarse_edges).any(|v| !v.is_finite()) {
                return schema(format!("feature `{name}`: non-finite edge"));
            }
            if b.coarse_edges.iter().any(|c| !b.fine_edges.contains(c)) {
                return schema(format!("feature `{name}`: coarse edge missing from fine grid"));
            }
        }
        let constraints = ConstraintSpec {
            features: self.features.iter().map(|f| f.constraint).collect(),
            allow_mask: self.allow_mask,
        };
        let mut store = ParameterStore::new(task, self.target, &names, &bins, &constraints)
            .map_err(|e| Error::Schema(e.to_string()))?;

        if self.intercepts.len() != store.n_outputs() || self.intercepts.iter().any(|v| !v.is_finite()) {
            return schema("intercepts".into());
        }
        store.intercepts = self.intercepts;
        if self.shapes.len() != store.n_outputs() {
            return schema("shapes must have one row per output".into());
        }
        for (i, row) in self.shapes.iter().enumerate() {
            if row.len() != store.n_features() {
                return schema(format!("shapes[{i}] must have one entry per feature"));
            }
            for (k, s) in row.iter().enumerate() {
                let b = &bins[k];
                if s.step_values.len() != b.n_fine() || s.poly_coeffs.len() != b.n_coarse() {
                    return schema(format!("shapes[{i}][{k}]: wrong number of bins"));
                }
                if s.step_values.iter().chain(s.poly_coeffs.iter().flatten()).any(|v| !v.is_finite()) {
                    return schema(format!("shapes[{i}][{k}]: non-finite coefficient"));
                }
                if !store.allowed(i, k) && !s.is_zero() {
                    return schema(format!("shapes[{i}][{k}]: masked pair has non-zero coefficients"));
                }
            }
        }
        store.shapes = self.shapes;
        if let Some(acc) = &self.se_accumulators {
            let ok = acc.len() == store.n_outputs()
                && acc.iter().all(|row| {
                    row.len() == bins.len()
                        && row.iter().zip(&bins).all(|(a, b)| {
                            a.step.len() == b.n_fine() && a.poly.len() == b.n_coarse()
                        })
                });
            if !ok {
                return schema("se_accumulators dimensions".into());
            }
        }
        store.se_accumulators = self.se_accumulators;
        Ok(store)
    }
}
