//! Shape-function export, elasticities and static SVG plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::loss::{sigmoid, softmax_into};
use crate::model::ParameterStore;
use crate::uncertainty::{shape_ci, UncertaintyTable};

pub const DEFAULT_GRID_POINTS: usize = 512;

/// `n` evenly spaced points from `lo` to `hi`, both ends included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|j| {
                if j == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * j as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// One shape function tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeGrid {
    pub output: usize,
    pub feature: usize,
    pub feature_name: String,
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub f_prime: Vec<f64>,
    pub f_double_prime: Vec<f64>,
    pub ci: Option<Vec<(f64, f64)>>,
}

impl ShapeGrid {
    /// Tabulates `f_ik` on `n_points` spanning the observed range. A
    /// constant feature yields a single point.
    pub fn tabulate(store: &ParameterStore, i: usize, k: usize, n_points: usize, table: Option<&UncertaintyTable>) -> Self {
        let bins = &store.feature(k).bins;
        let n = if bins.min == bins.max { n_points.min(1) } else { n_points };
        let x = linspace(bins.min, bins.max, n);
        Self::at(store, i, k, x, table)
    }

    /// Tabulates `f_ik` at the given points.
    pub fn at(store: &ParameterStore, i: usize, k: usize, x: Vec<f64>, table: Option<&UncertaintyTable>) -> Self {
        let f = x.iter().map(|&v| store.evaluate_shape(i, k, v)).collect();
        let f_prime = x.iter().map(|&v| store.evaluate_derivative(i, k, v, 1)).collect();
        let f_double_prime = x.iter().map(|&v| store.evaluate_derivative(i, k, v, 2)).collect();
        let ci = table.map(|t| shape_ci(store, t, i, k, &x));
        Self {
            output: i,
            feature: k,
            feature_name: store.feature(k).name.clone(),
            x,
            f,
            f_prime,
            f_double_prime,
            ci,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,f,f_prime,f_double_prime");
        if self.ci.is_some() {
            s.push_str(",ci_lower,ci_upper");
        }
        s.push('\n');
        for j in 0..self.x.len() {
            let _ = write!(s, "{},{},{},{}", self.x[j], self.f[j], self.f_prime[j], self.f_double_prime[j]);
            if let Some(ci) = &self.ci {
                let _ = write!(s, ",{},{}", ci[j].0, ci[j].1);
            }
            s.push('\n');
        }
        s
    }

    /// File stem `shape_<output>_<feature>`.
    pub fn file_stem(&self) -> String {
        format!("shape_{}_{}", self.output, sanitize(&self.feature_name))
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Tabulates the requested features (all when `features` is empty) for
/// every output they enter, and writes a CSV and an SVG for each into
/// `dir` when given.
pub fn export_shapes(
    store: &ParameterStore,
    features: &[String],
    n_points: usize,
    with_ci: bool,
    dir: Option<&Path>,
) -> Result<Vec<ShapeGrid>> {
    let ks: Vec<usize> = if features.is_empty() {
        (0..store.n_features()).collect()
    } else {
        features
            .iter()
            .map(|name| store.feature_index(name).ok_or_else(|| Error::UnknownFeature(name.clone())))
            .collect::<Result<_>>()?
    };
    let table = if with_ci { Some(UncertaintyTable::from_store(store)?) } else { None };
    let mut grids = Vec::new();
    for &k in &ks {
        for i in store.outputs_using(k) {
            grids.push(ShapeGrid::tabulate(store, i, k, n_points, table.as_ref()));
        }
    }
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for g in &grids {
            let stem = g.file_stem();
            write_file(&dir.join(format!("{stem}.csv")), &g.to_csv())?;
            write_file(&dir.join(format!("{stem}.svg")), &render_svg(g))?;
        }
    }
    Ok(grids)
}

fn write_file(path: &PathBuf, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Point elasticity of output `i` with respect to feature `k` at `row`.
///
/// Regression: `x f'(x) / F`. Binary: `x (1 - p) f'(x)`. Multiclass:
/// `x (1 - p_i) f'_ik(x)`, defined only when `k` enters output `i` alone.
pub fn elasticity(store: &ParameterStore, i: usize, k: usize, row: &[f64]) -> Result<f64> {
    if row.len() != store.n_features() {
        return Err(Error::Shape(format!(
            "model expects {} features, got {}",
            store.n_features(),
            row.len()
        )));
    }
    if i >= store.n_outputs() || k >= store.n_features() {
        return Err(Error::Shape(format!("no output {i} / feature {k} in this model")));
    }
    if !store.allowed(i, k) {
        return Ok(0.0);
    }
    let x = row[k];
    let fp = store.evaluate_derivative(i, k, x, 1);
    let f = store.raw_row(row);
    Ok(match store.task() {
        Task::Regression => x * fp / f[0],
        Task::Binary => x * (1.0 - sigmoid(f[0])) * fp,
        Task::Multiclass { .. } => {
            let users = store.outputs_using(k);
            if users.len() > 1 {
                log::warn!(
                    "feature `{}` enters {} outputs; its probability elasticity is not a function of one shape",
                    store.feature(k).name,
                    users.len()
                );
                return Err(Error::Constraint(format!(
                    "feature `{}` enters several outputs; probability elasticity is undefined",
                    store.feature(k).name
                )));
            }
            let mut p = vec![0.0; f.len()];
            softmax_into(&f, &mut p);
            x * (1.0 - p[i]) * fp
        }
    })
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;
const N_TICKS: usize = 5;

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// A self-contained SVG plot of `f` with an optional shaded band.
/// Output depends only on the grid.
pub fn render_svg(grid: &ShapeGrid) -> String {
    let finite = |v: &f64| v.is_finite();
    let (xmin, xmax) = span(grid.x.iter().copied().filter(finite));
    let mut ys: Vec<f64> = grid.f.iter().copied().filter(finite).collect();
    if let Some(ci) = &grid.ci {
        ys.extend(ci.iter().flat_map(|&(l, u)| [l, u]).filter(finite));
    }
    let (ymin, ymax) = span(ys.into_iter());
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - xmin) / (xmax - xmin) * pw;
    let sy = |y: f64| MARGIN_T + (ymax - y) / (ymax - ymin) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" font-family="sans-serif" font-size="13" text-anchor="middle">{} (output {})</text>"#,
        WIDTH / 2.0,
        xml_escape(&grid.feature_name),
        grid.output
    );

    if let Some(ci) = &grid.ci {
        let pts: Vec<(f64, f64, f64)> = grid
            .x
            .iter()
            .zip(ci)
            .filter(|(_, (l, u))| l.is_finite() && u.is_finite())
            .map(|(&x, &(l, u))| (x, l, u))
            .collect();
        if !pts.is_empty() {
            let mut d = String::new();
            for (j, &(x, _, u)) in pts.iter().enumerate() {
                let _ = write!(d, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, sx(x), sy(u));
            }
            for &(x, l, _) in pts.iter().rev() {
                let _ = write!(d, "L{:.2},{:.2} ", sx(x), sy(l));
            }
            d.push('Z');
            let _ = writeln!(s, r##"<path d="{d}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>"##);
        }
    }

    // axes
    let (x0, x1, y0, y1) = (MARGIN_L, WIDTH - MARGIN_R, MARGIN_T, HEIGHT - MARGIN_B);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for v in linspace(xmin, xmax, N_TICKS) {
        let px = sx(v);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{y1}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            y1 + 5.0,
            y1 + 18.0,
            fmt_num(v)
        );
    }
    for v in linspace(ymin, ymax, N_TICKS) {
        let py = sy(v);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            fmt_num(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 10.0,
        xml_escape(&grid.feature_name)
    );

    let mut pts = String::new();
    for (&x, &y) in grid.x.iter().zip(&grid.f) {
        if x.is_finite() && y.is_finite() {
            let _ = write!(pts, "{:.2},{:.2} ", sx(x), sy(y));
        }
    }
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#08519c" stroke-width="2"/>"##,
        pts.trim_end()
    );
    s.push_str("</svg>\n");
    s
}

/// Plot range of some values, widened when degenerate.
fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (-1.0, 1.0)
    } else if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        (lo - pad, hi + pad)
    } else {
        (lo, hi)
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureBins, FeatureKind};
    use crate::model::{ConstraintSpec, FeatureConstraint};

    fn bins() -> FeatureBins {
        FeatureBins {
            kind: FeatureKind::Continuous,
            fine_edges: vec![2.0, 5.0, 8.0],
            coarse_edges: vec![5.0],
            min: 0.0,
            max: 10.0,
        }
    }

    fn store(task: Task, mask: Option<Vec<Vec<bool>>>) -> ParameterStore {
        let b = vec![bins(), bins()];
        let mut spec = ConstraintSpec::uniform(&[FeatureKind::Continuous; 2], task.n_outputs(), FeatureConstraint::free(3));
        if let Some(m) = mask {
            spec.allow_mask = m;
        }
        ParameterStore::new(task, "y", &["a".into(), "b".into()], &b, &spec).unwrap()
    }

    #[test]
    fn zero_model_exports_zeros() {
        let s = store(Task::Regression, None);
        let g = export_shapes(&s, &[], 512, false, None).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].x.len(), 512);
        assert!(g[0].f.iter().chain(&g[0].f_prime).chain(&g[0].f_double_prime).all(|&v| v == 0.0));
        let two = ShapeGrid::tabulate(&s, 0, 0, 2, None);
        assert_eq!(two.x, vec![0.0, 10.0]);
    }

    #[test]
    fn unknown_feature_is_an_error() {
        let s = store(Task::Regression, None);
        assert!(matches!(
            export_shapes(&s, &["zzz".into()], 10, false, None),
            Err(Error::UnknownFeature(_))
        ));
    }

    #[test]
    fn csv_matches_evaluation() {
        let mut s = store(Task::Regression, None);
        s.accumulate_update(0, 0, 2, 5.0, 0.3, -0.7, 1.0).unwrap();
        s.accumulate_update(0, 0, 0, 2.0, 1.0, 0.5, 1.0).unwrap();
        let g = ShapeGrid::tabulate(&s, 0, 0, 33, None);
        for line in g.to_csv().lines().skip(1) {
            let v: Vec<f64> = line.split(',').map(|t| t.parse().unwrap()).collect();
            assert_eq!(v[1], s.evaluate_shape(0, 0, v[0]));
            assert_eq!(v[2], s.evaluate_derivative(0, 0, v[0], 1));
            assert_eq!(v[3], s.evaluate_derivative(0, 0, v[0], 2));
        }
    }

    #[test]
    fn identity_shape_has_unit_elasticity() {
        let mut s = store(Task::Regression, None);
        // f_a(x) = x - 0 on the whole range via a degree-1 split at 5 with equal sides
        s.accumulate_update(0, 0, 1, 5.0, 1.0, 1.0, 1.0).unwrap();
        s.set_intercepts(vec![5.0]);
        for x in [1.0, 3.0, 7.5] {
            let e = elasticity(&s, 0, 0, &[x, 0.0]).unwrap();
            assert!((e - 1.0).abs() < 1e-12, "{e}");
        }
        let flat = elasticity(&s, 0, 1, &[3.0, 4.0]).unwrap();
        assert_eq!(flat, 0.0);
    }

    #[test]
    fn multiclass_probability_elasticity() {
        // three classes; feature a only in output 0, feature b in all outputs
        let mask = vec![vec![true, true], vec![false, true], vec![false, true]];
        let mut s = store(Task::Multiclass { n_classes: 3 }, Some(mask));
        s.accumulate_update(0, 0, 1, 5.0, -0.1, -0.1, 1.0).unwrap();
        // make p_0 = 0.5 at x = 10: F_0 - 0.5 = ln(2) - ln(2)... pick intercepts so
        // exp(F0) = exp(F1) + exp(F2)
        let f0_shape = s.evaluate_shape(0, 0, 10.0);
        s.set_intercepts(vec![-f0_shape, -(2f64).ln(), -(2f64).ln()]);
        let e = elasticity(&s, 0, 0, &[10.0, 0.0]).unwrap();
        // 10 * 0.5 * 0.5 * (-0.1) / 0.5
        assert!((e + 0.5).abs() < 1e-12, "{e}");
        assert!(elasticity(&s, 0, 1, &[10.0, 0.0]).is_err());
    }

    #[test]
    fn svg_is_deterministic_and_band_optional() {
        let mut s = store(Task::Regression, None);
        s.accumulate_update(0, 0, 1, 5.0, 1.0, -1.0, 1.0).unwrap();
        let g = ShapeGrid::tabulate(&s, 0, 0, 50, None);
        let a = render_svg(&g);
        assert_eq!(a, render_svg(&g));
        assert!(a.contains("<polyline") && !a.contains("<path"));
        let mut with_band = g.clone();
        with_band.ci = Some(g.f.iter().map(|&f| (f - 1.0, f + 1.0)).collect());
        assert!(render_svg(&with_band).contains("<path"));
        let zero = ShapeGrid::tabulate(&store(Task::Regression, None), 0, 1, 20, None);
        let z = render_svg(&zero);
        assert!(z.contains("<polyline"));
    }
}
