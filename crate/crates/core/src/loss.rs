//! Link functions, losses and prediction-space derivatives.

use ndarray::{Array2, ArrayView2, Axis};

use crate::data::Task;

/// Lower bound applied to Hessians before they are used as divisors.
pub const HESSIAN_FLOOR: f64 = 1e-12;

const PROB_CLAMP: f64 = 1e-15;

pub fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// Softmax of one row, shifted by its maximum.
pub fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &f) in out.iter_mut().zip(row) {
        *o = (f - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Maps prediction functions `F` (N x J) to predictions.
pub fn link_apply(f: ArrayView2<'_, f64>, task: Task) -> Array2<f64> {
    match task {
        Task::Regression => f.to_owned(),
        Task::Binary => f.mapv(sigmoid),
        Task::Multiclass { .. } => {
            let mut out = Array2::zeros(f.raw_dim());
            for (src, mut dst) in f.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
                let src = src.to_vec();
                softmax_into(&src, dst.as_slice_mut().expect("standard layout"));
            }
            out
        }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Mean loss of predictions `yhat` (already passed through the link).
///
/// Squared error for regression, binary cross-entropy, and categorical
/// cross-entropy where `y` holds class indices.
pub fn loss_eval(y: &[f64], yhat: ArrayView2<'_, f64>, task: Task) -> f64 {
    let n = y.len();
    if n == 0 {
        return f64::NAN;
    }
    let total: f64 = match task {
        Task::Regression => y
            .iter()
            .zip(yhat.column(0))
            .map(|(&y, &p)| (y - p) * (y - p))
            .sum(),
        Task::Binary => y
            .iter()
            .zip(yhat.column(0))
            .map(|(&y, &p)| {
                let p = clamp_prob(p);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum(),
        Task::Multiclass { .. } => y
            .iter()
            .zip(yhat.axis_iter(Axis(0)))
            .map(|(&y, row)| -clamp_prob(row[y as usize]).ln())
            .sum(),
    };
    total / n as f64
}

/// Mean loss straight from prediction functions.
pub fn loss_from_raw(y: &[f64], f: ArrayView2<'_, f64>, task: Task) -> f64 {
    loss_eval(y, link_apply(f, task).view(), task)
}

/// Per-sample first and second loss derivatives with respect to `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBatch {
    pub g: Array2<f64>,
    pub h: Array2<f64>,
}

/// Gradients and (diagonal) Hessians of the element-wise loss.
///
/// Regression uses `(y - F)^2`, so `g = 2(F - y)` and `h = 2`. Binary and
/// multi-class use `g = p - y` and `h = p(1 - p)` per output.
pub fn derivatives(y: &[f64], f: ArrayView2<'_, f64>, task: Task) -> DerivativeBatch {
    let mut g = Array2::zeros(f.raw_dim());
    let mut h = Array2::zeros(f.raw_dim());
    derivatives_into(y, f, task, &mut g, &mut h);
    DerivativeBatch { g, h }
}

pub(crate) fn derivatives_into(
    y: &[f64],
    f: ArrayView2<'_, f64>,
    task: Task,
    g: &mut Array2<f64>,
    h: &mut Array2<f64>,
) {
    match task {
        Task::Regression => {
            for n in 0..y.len() {
                g[[n, 0]] = 2.0 * (f[[n, 0]] - y[n]);
                h[[n, 0]] = 2.0;
            }
        }
        Task::Binary => {
            for n in 0..y.len() {
                let p = sigmoid(f[[n, 0]]);
                g[[n, 0]] = p - y[n];
                h[[n, 0]] = p * (1.0 - p);
            }
        }
        Task::Multiclass { n_classes } => {
            let mut p = vec![0.0; n_classes];
            let mut row = vec![0.0; n_classes];
            for n in 0..y.len() {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = f[[n, j]];
                }
                softmax_into(&row, &mut p);
                let label = y[n] as usize;
                for j in 0..n_classes {
                    let target = if j == label { 1.0 } else { 0.0 };
                    g[[n, j]] = p[j] - target;
                    h[[n, j]] = p[j] * (1.0 - p[j]);
                }
            }
        }
    }
}

/// Starting value of the intercepts: the mean target for regression, the
/// log-odds of the positive rate for binary, log class priors otherwise.
pub fn initial_intercepts(y: &[f64], task: Task) -> Vec<f64> {
    let n = y.len().max(1) as f64;
    match task {
        Task::Regression => vec![y.iter().sum::<f64>() / n],
        Task::Binary => {
            let p = clamp_prob(y.iter().sum::<f64>() / n);
            vec![(p / (1.0 - p)).ln()]
        }
        Task::Multiclass { n_classes } => {
            let mut counts = vec![0.0; n_classes];
            for &c in y {
                counts[c as usize] += 1.0;
            }
            counts.iter().map(|c| clamp_prob(c / n).ln()).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    const MC2: Task = Task::Multiclass { n_classes: 2 };

    #[test]
    fn links() {
        let p = link_apply(array![[0.0, 0.0]].view(), MC2);
        assert_eq!(p, array![[0.5, 0.5]]);
        assert_eq!(link_apply(array![[0.0]].view(), Task::Binary), array![[0.5]]);
        let p = link_apply(array![[2f64.ln(), 0.0]].view(), MC2);
        assert_abs_diff_eq!(p[[0, 0]], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[[0, 1]], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn softmax_is_stable_for_huge_logits() {
        let p = link_apply(array![[1000.0, 999.0, -1000.0]].view(), Task::Multiclass { n_classes: 3 });
        assert!(p.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn loss_values() {
        let l = loss_eval(&[1.0, 3.0], array![[1.0], [1.0]].view(), Task::Regression);
        assert_eq!(l, 2.0);
        let l = loss_eval(&[0.0], array![[0.5, 0.5]].view(), MC2);
        assert_abs_diff_eq!(l, 2f64.ln(), epsilon = 1e-15);
        let l = loss_eval(&[1.0], array![[0.9]].view(), Task::Binary);
        assert_abs_diff_eq!(l, -(0.9f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(l, 0.10536, epsilon = 1e-5);
    }

    #[test]
    fn clamped_log_stays_finite() {
        let l = loss_eval(&[1.0], array![[0.0]].view(), Task::Binary);
        assert!(l.is_finite());
    }

    #[test]
    fn derivative_values() {
        let d = derivatives(&[1.0], array![[0.0]].view(), Task::Regression);
        assert_eq!((d.g[[0, 0]], d.h[[0, 0]]), (-2.0, 2.0));
        let d = derivatives(&[0.0], array![[0.0, 0.0]].view(), MC2);
        assert_eq!(d.g, array![[-0.5, 0.5]]);
        assert_eq!(d.h, array![[0.25, 0.25]]);
        let d = derivatives(&[0.0], array![[0.0]].view(), Task::Binary);
        assert_eq!((d.g[[0, 0]], d.h[[0, 0]]), (0.5, 0.25));
    }

    #[test]
    fn intercepts() {
        assert_eq!(initial_intercepts(&[1.0, 3.0], Task::Regression), vec![2.0]);
        assert_eq!(initial_intercepts(&[0.0, 1.0], Task::Binary), vec![0.0]);
        let b = initial_intercepts(&[0.0, 1.0, 1.0, 1.0], MC2);
        assert_abs_diff_eq!(b[1] - b[0], 3f64.ln(), epsilon = 1e-12);
    }
}
