//! Diagonal-Hessian standard errors and 95% bands for shape functions.
//!
//! Every coefficient is treated as an independent parameter whose variance
//! is the inverse of its own Hessian entry `sum h (x*)^(2d)` over the samples
//! in its bin. A point's band combines only the parameters that vary with
//! `x` there: the fine bin's step, the coarse bin's polynomial terms and any
//! global terms.

use crate::data::{Dataset, FeatureBins};
use crate::error::{Error, Result};
use crate::loss::derivatives;
use crate::model::{ParameterStore, SeAccumulator};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

/// Hessian sums at the store's predictions on `data` (normally the
/// training set at the final iteration).
pub fn accumulate(store: &ParameterStore, data: &Dataset) -> Result<Vec<Vec<SeAccumulator>>> {
    if data.n_features() != store.n_features() {
        return Err(Error::Shape(format!(
            "model expects {} features, got {}",
            store.n_features(),
            data.n_features()
        )));
    }
    let (f, _) = store.predict(data)?;
    let der = derivatives(data.targets(), f.view(), store.task());
    let out = (0..store.n_outputs())
        .map(|i| {
            let h = der.h.column(i);
            (0..store.n_features())
                .map(|k| {
                    let bins = &store.feature(k).bins;
                    let mut acc = SeAccumulator {
                        step: vec![0.0; bins.n_fine()],
                        poly: vec![[0.0; 3]; bins.n_coarse()],
                        global: [0.0; 4],
                    };
                    for (&x, &hn) in data.column(k).iter().zip(h.iter()) {
                        acc.step[bins.fine_bin(x)] += hn;
                        let c = bins.coarse_bin(x);
                        let t = x - bins.coarse_lower(c);
                        let g = x - bins.min;
                        for d in 1..=3 {
                            acc.poly[c][d - 1] += hn * t.powi(2 * d as i32);
                        }
                        for d in 0..=3 {
                            acc.global[d] += hn * g.powi(2 * d as i32);
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Ok(out)
}

fn se_from_sum(s: f64) -> f64 {
    if s > 0.0 {
        1.0 / s.sqrt()
    } else {
        f64::INFINITY
    }
}

/// Parameter standard errors of one `f_ik`; infinite where a bin saw no
/// curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSe {
    pub step: Vec<f64>,
    pub poly: Vec<[f64; 3]>,
    pub global: [f64; 4],
}

impl From<&SeAccumulator> for ShapeSe {
    fn from(a: &SeAccumulator) -> Self {
        Self {
            step: a.step.iter().map(|&s| se_from_sum(s)).collect(),
            poly: a.poly.iter().map(|r| r.map(se_from_sum)).collect(),
            global: a.global.map(se_from_sum),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyTable {
    /// Indexed `[output][feature]`.
    pub shapes: Vec<Vec<ShapeSe>>,
}

impl UncertaintyTable {
    fn from_accumulators(acc: &[Vec<SeAccumulator>]) -> Self {
        Self {
            shapes: acc.iter().map(|row| row.iter().map(ShapeSe::from).collect()).collect(),
        }
    }

    /// From the sums saved in a trained model.
    pub fn from_store(store: &ParameterStore) -> Result<Self> {
        let acc = store
            .se_accumulators()
            .ok_or_else(|| Error::Schema("model carries no standard-error data".into()))?;
        Ok(Self::from_accumulators(acc))
    }

    /// `SE(beta_ikdb)`: `d = 0` indexes fine bins, `d >= 1` coarse bins.
    pub fn se(&self, i: usize, k: usize, d: usize, b: usize) -> f64 {
        let s = &self.shapes[i][k];
        if d == 0 {
            s.step[b]
        } else {
            s.poly[b][d - 1]
        }
    }
}

/// Standard errors from the Hessian at the store's predictions on `data`.
pub fn param_se(store: &ParameterStore, data: &Dataset) -> Result<UncertaintyTable> {
    if data.n_samples() == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(UncertaintyTable::from_accumulators(&accumulate(store, data)?))
}

/// `SE_pred(x)` of `f_ik`.
pub fn prediction_se(store: &ParameterStore, table: &UncertaintyTable, i: usize, k: usize, x: f64) -> f64 {
    let meta = store.feature(k);
    let se = &table.shapes[i][k];
    let bins: &FeatureBins = &meta.bins;
    let mut var = 0.0;
    let mut add = |se: f64, z: f64, d: usize| {
        if se.is_infinite() {
            var = f64::INFINITY;
        } else {
            var += se * se * z.powi(2 * d as i32);
        }
    };
    for d in 0..=usize::from(meta.constraint.max_degree) {
        if meta.constraint.is_global(d) {
            add(se.global[d], x - bins.min, d);
        } else if d == 0 {
            add(se.step[bins.fine_bin(x)], 1.0, 0);
        } else {
            let c = bins.coarse_bin(x);
            add(se.poly[c][d - 1], x - bins.coarse_lower(c), d);
        }
    }
    var.sqrt()
}

/// `f_ik(x) -/+ 1.96 SE_pred(x)` at each grid point.
pub fn shape_ci(
    store: &ParameterStore,
    table: &UncertaintyTable,
    i: usize,
    k: usize,
    grid: &[f64],
) -> Vec<(f64, f64)> {
    grid.iter()
        .map(|&x| {
            let f = store.evaluate_shape(i, k, x);
            let half = Z_95 * prediction_se(store, table, i, k, x);
            (f - half, f + half)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BinLayout, FeatureKind, SplitScheme, Task};
    use crate::model::{ConstraintSpec, FeatureConstraint};

    fn store_for(x: Vec<f64>, c: FeatureConstraint) -> (ParameterStore, Dataset) {
        let n = x.len();
        let data = Dataset::new(
            vec![x],
            vec![0.0; n],
            vec!["x".into()],
            vec![FeatureKind::Continuous],
            "y",
            Task::Regression,
        )
        .unwrap();
        let layout = BinLayout::fit(&data, &SplitScheme::default());
        let spec = ConstraintSpec::uniform(data.feature_kinds(), 1, c);
        let store = ParameterStore::new(Task::Regression, "y", data.feature_names(), &layout.features, &spec).unwrap();
        (store, data)
    }

    #[test]
    fn fifty_samples_give_se_one_tenth() {
        // 50 copies of each of two values: two fine bins of 50 samples
        let x: Vec<f64> = (0..100).map(|n| if n < 50 { 0.0 } else { 1.0 }).collect();
        let (store, data) = store_for(x, FeatureConstraint::free(0));
        let t = param_se(&store, &data).unwrap();
        assert!((t.se(0, 0, 0, 0) - 0.1).abs() < 1e-15);
        assert!((t.se(0, 0, 0, 1) - 0.1).abs() < 1e-15);
        let ci = shape_ci(&store, &t, 0, 0, &[0.0]);
        assert!((ci[0].1 - 0.196).abs() < 1e-12);
        assert!((ci[0].0 + 0.196).abs() < 1e-12);
    }

    #[test]
    fn doubling_data_divides_se_by_root_two() {
        let x: Vec<f64> = (0..40).map(f64::from).collect();
        let (store, data) = store_for(x.clone(), FeatureConstraint::free(3));
        let a = param_se(&store, &data).unwrap();
        let doubled: Vec<f64> = x.iter().chain(&x).copied().collect();
        let (store2, data2) = store_for(doubled, FeatureConstraint::free(3));
        let b = param_se(&store2, &data2).unwrap();
        assert_eq!(store.feature(0).bins, store2.feature(0).bins);
        for d in 0..=3 {
            let n_bins = if d == 0 { store.feature(0).bins.n_fine() } else { store.feature(0).bins.n_coarse() };
            for bin in 0..n_bins {
                let (sa, sb) = (a.se(0, 0, d, bin), b.se(0, 0, d, bin));
                if sa.is_finite() {
                    assert!((sa / sb - 2f64.sqrt()).abs() < 1e-12, "d {d} bin {bin}: {sa} {sb}");
                }
            }
        }
    }

    #[test]
    fn band_is_symmetric_and_empty_bins_are_infinite() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let (mut store, data) = store_for(x, FeatureConstraint::free(1));
        store.accumulate_update(0, 0, 0, store.feature(0).bins.fine_edges[3], 1.0, -2.0, 0.1).unwrap();
        let mut acc = accumulate(&store, &data).unwrap();
        acc[0][0].step[0] = 0.0;
        store.set_se_accumulators(acc);
        let t = UncertaintyTable::from_store(&store).unwrap();
        assert_eq!(t.se(0, 0, 0, 0), f64::INFINITY);
        let grid = [0.0, 5.5, 12.0, 29.0];
        for (&x, (lo, hi)) in grid.iter().zip(shape_ci(&store, &t, 0, 0, &grid)) {
            let f = store.evaluate_shape(0, 0, x);
            if x == 0.0 {
                assert!(lo.is_infinite() && hi.is_infinite());
            } else {
                assert!(lo <= f && f <= hi);
                assert!(((lo + hi) / 2.0 - f).abs() <= 1e-12 * (1.0 + f.abs()));
            }
        }
    }

    #[test]
    fn untrained_store_has_no_table() {
        let (store, _) = store_for(vec![0.0, 1.0], FeatureConstraint::free(0));
        assert!(UncertaintyTable::from_store(&store).is_err());
    }
}
