//! Feasible leaf values under monotonicity and curvature constraints.
//!
//! After an update `nu * gamma * (x - origin)^d` on a set of coarse pieces,
//! each piece's `f'` is at most quadratic and `f''` at most linear in the
//! local coordinate, so their minima over the piece are attained at the
//! endpoints or at the vertex of `f'`. For each point the condition is
//! affine in `gamma`, hence the feasible set is an interval; since the
//! current model is feasible it contains 0.
//!
//! Constraints are enforced over the observed feature range only.

use std::ops::Range;

use crate::data::FeatureBins;
use crate::model::{poly_eval, shifted_monomial, FeatureConstraint, ShapeFunction};

/// Slack allowed on `m f'` and `c f''` to absorb floating-point rounding
/// in the stored coefficients.
pub const FEASIBILITY_TOL: f64 = 1e-11;

const BISECTION_STEPS: usize = 200;

/// Minimum of `a + b t + c t^2` over `[0, w]`.
fn quadratic_min(a: f64, b: f64, c: f64, w: f64) -> f64 {
    let q = |t: f64| a + t * (b + t * c);
    let mut m = q(0.0).min(q(w));
    if c > 0.0 {
        let v = -b / (2.0 * c);
        if v > 0.0 && v < w {
            m = m.min(q(v));
        }
    }
    m
}

/// Checks a prospective update against one feature's shape constraints.
#[derive(Debug, Clone, Copy)]
pub struct ShapeCheck<'a> {
    pub shape: &'a ShapeFunction,
    pub bins: &'a FeatureBins,
    pub constraint: FeatureConstraint,
    pub degree: usize,
    /// Point the monomial is centred on: the split threshold, or the
    /// feature minimum for global terms.
    pub origin: f64,
    pub nu: f64,
}

impl ShapeCheck<'_> {
    fn piece_ok(&self, c: usize, gamma: f64) -> bool {
        let lower = self.bins.coarse_lower(c);
        let width = (self.bins.coarse_upper(c) - lower).max(0.0);
        let mut coeffs = self.shape.poly_coeffs[c];
        let delta = shifted_monomial(self.degree, lower - self.origin);
        let step = self.nu * gamma;
        for (a, d) in coeffs.iter_mut().zip(delta) {
            *a += step * d;
        }
        let m = f64::from(self.constraint.monotone);
        if m != 0.0 {
            let lowest = quadratic_min(m * coeffs[1], m * 2.0 * coeffs[2], m * 3.0 * coeffs[3], width);
            if !(lowest >= -FEASIBILITY_TOL) {
                return false;
            }
        }
        let cv = f64::from(self.constraint.curvature);
        if cv != 0.0 {
            let at = |t| cv * poly_eval(&coeffs, t, 2);
            if !(at(0.0).min(at(width)) >= -FEASIBILITY_TOL) {
                return false;
            }
        }
        true
    }

    /// Whether `gamma` keeps every piece in `pieces` feasible.
    pub fn feasible(&self, pieces: Range<usize>, gamma: f64) -> bool {
        pieces.into_iter().all(|c| self.piece_ok(c, gamma))
    }

    /// The value in `[0, gamma]` closest to `gamma` that stays feasible.
    /// Returns 0 when even the current model violates the constraints.
    pub fn clamp(&self, pieces: Range<usize>, gamma: f64) -> f64 {
        if pieces.is_empty() || gamma == 0.0 || self.feasible(pieces.clone(), gamma) {
            return gamma;
        }
        if !self.feasible(pieces.clone(), 0.0) {
            return 0.0;
        }
        bisect(0.0, gamma, |g| self.feasible(pieces.clone(), g))
    }

    /// The feasible interval `(gamma_min, gamma_max)` for these pieces;
    /// unbounded ends are infinite.
    pub fn interval(&self, pieces: Range<usize>) -> (f64, f64) {
        if !self.feasible(pieces.clone(), 0.0) {
            return (0.0, 0.0);
        }
        let reach = |dir: f64| {
            let mut probe = dir;
            while self.feasible(pieces.clone(), probe) {
                if probe.abs() > 1e300 {
                    return dir * f64::INFINITY;
                }
                probe *= 16.0;
            }
            bisect(0.0, probe, |g| self.feasible(pieces.clone(), g))
        };
        (reach(-1.0), reach(1.0))
    }
}

/// Last feasible point between `ok` (feasible) and `bad` (infeasible).
fn bisect(mut ok: f64, mut bad: f64, feasible: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..BISECTION_STEPS {
        let mid = ok + (bad - ok) / 2.0;
        if mid == ok || mid == bad {
            break;
        }
        if feasible(mid) {
            ok = mid;
        } else {
            bad = mid;
        }
    }
    ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureKind;

    fn bins() -> FeatureBins {
        FeatureBins {
            kind: FeatureKind::Continuous,
            fine_edges: vec![1.0, 2.0, 3.0],
            coarse_edges: vec![2.0],
            min: 0.0,
            max: 4.0,
        }
    }

    fn check<'a>(shape: &'a ShapeFunction, b: &'a FeatureBins, m: i8, c: i8, d: usize, origin: f64) -> ShapeCheck<'a> {
        ShapeCheck {
            shape,
            bins: b,
            constraint: FeatureConstraint {
                smoothness: 0,
                max_degree: 3,
                monotone: m,
                curvature: c,
            },
            degree: d,
            origin,
            nu: 0.1,
        }
    }

    #[test]
    fn increasing_slope_must_be_non_negative() {
        let b = bins();
        let s = ShapeFunction::zeros(&b);
        let ck = check(&s, &b, 1, 0, 1, 2.0);
        let (lo, hi) = ck.interval(1..2);
        // the slack admits a sliver of negative slope
        assert!(lo <= 0.0 && lo > -1e-9, "{lo}");
        assert_eq!(hi, f64::INFINITY);
        assert!(ck.clamp(1..2, -3.0).abs() < 1e-9);
        assert_eq!(ck.clamp(1..2, 3.0), 3.0);
    }

    #[test]
    fn convexity_needs_non_negative_quadratic() {
        let b = bins();
        let s = ShapeFunction::zeros(&b);
        let ck = check(&s, &b, 0, 1, 2, 2.0);
        assert!(ck.interval(0..1).0.abs() < 1e-9);
        assert!(ck.interval(1..2).0.abs() < 1e-9);
        assert_eq!(ck.interval(0..2).1, f64::INFINITY);
    }

    #[test]
    fn unconstrained_degree_zero_is_free() {
        let b = bins();
        let s = ShapeFunction::zeros(&b);
        let ck = check(&s, &b, 1, 0, 0, 1.0);
        assert_eq!(ck.interval(0..2), (f64::NEG_INFINITY, f64::INFINITY));
    }

    #[test]
    fn existing_slope_gives_finite_room() {
        let b = bins();
        let mut s = ShapeFunction::zeros(&b);
        // f' = 1 on both pieces
        s.poly_coeffs = vec![[0.0, 1.0, 0.0, 0.0], [2.0, 1.0, 0.0, 0.0]];
        let ck = check(&s, &b, 1, 0, 1, 0.0);
        let (lo, hi) = ck.interval(0..2);
        // 1 + 0.1 gamma >= 0
        assert!((lo + 10.0).abs() < 1e-9, "{lo}");
        assert_eq!(hi, f64::INFINITY);
        let clamped = ck.clamp(0..2, -50.0);
        assert!(ck.feasible(0..2, clamped));
        assert!((clamped + 10.0).abs() < 1e-9);
    }

    #[test]
    fn cubic_update_checks_interior_vertex() {
        let b = bins();
        let mut s = ShapeFunction::zeros(&b);
        // f' = 1 everywhere on piece 1 (t in [0, 2])
        s.poly_coeffs[1] = [0.0, 1.0, 0.0, 0.0];
        // adding gamma (x - 3)^3: f' = 1 + 0.3 gamma (x - 3)^2, fine for gamma >= 0
        let ck = check(&s, &b, 1, 0, 3, 3.0);
        assert!(ck.feasible(1..2, 100.0));
        // negative gamma bites hardest at x = 4 (or x = 2): 1 - 0.3 |gamma| >= 0
        let lo = ck.interval(1..2).0;
        assert!((lo + 1.0 / 0.3).abs() < 1e-9, "{lo}");
    }
}
