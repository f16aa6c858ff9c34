//! Candidate enumeration for one (output, feature) pair.
//!
//! Degree-0 splits scan prefix sums over fine-bin histograms. For degree
//! `d >= 1` the side sums `sum g (x - u)^d` and `sum h (x - u)^(2d)` are
//! assembled from per-coarse-bin moments `sum g t^j`, `sum h t^j` taken in
//! each bin's local coordinate, shifted to the threshold by the binomial
//! theorem. A full threshold scan is then `O(B^2 d)` instead of `O(N B)`.

use serde::{Deserialize, Serialize};

use super::feasibility::ShapeCheck;
use crate::data::FeatureBins;
use crate::loss::HESSIAN_FLOOR;
use crate::model::{FeatureConstraint, ShapeFunction, MAX_DEGREE};

const BINOM: [[f64; 7]; 7] = [
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 3.0, 3.0, 1.0, 0.0, 0.0, 0.0],
    [1.0, 4.0, 6.0, 4.0, 1.0, 0.0, 0.0],
    [1.0, 5.0, 10.0, 10.0, 5.0, 1.0, 0.0],
    [1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0],
];

fn soft_threshold(s: f64, lambda: f64) -> f64 {
    s.signum() * (s.abs() - lambda).max(0.0)
}

/// Regularised Newton step `-soft(sum_g, l1) / (sum_h + l2)`.
pub fn leaf_value(sum_g: f64, sum_h: f64, l1: f64, l2: f64) -> f64 {
    if sum_g == 0.0 {
        return 0.0;
    }
    -soft_threshold(sum_g, l1) / (sum_h + l2).max(HESSIAN_FLOOR)
}

/// Decrease of the second-order loss model when a side moves by `gamma`.
pub fn side_gain(gamma: f64, sum_g: f64, sum_h: f64) -> f64 {
    -(gamma * sum_g + 0.5 * gamma * gamma * sum_h)
}

/// Gain of a candidate whose sides take their regularised leaf values.
pub fn candidate_gain(sides: &[SideSums], l1: f64, l2: f64) -> f64 {
    sides
        .iter()
        .map(|s| side_gain(leaf_value(s.g, s.h, l1, l2), s.g, s.h))
        .sum()
}

/// Parameter-space gradient and Hessian sums on one side of a split.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SideSums {
    pub g: f64,
    pub h: f64,
    pub n: usize,
}

impl std::ops::Add for SideSums {
    type Output = SideSums;
    fn add(self, o: SideSums) -> SideSums {
        SideSums {
            g: self.g + o.g,
            h: self.h + o.h,
            n: self.n + o.n,
        }
    }
}

/// Direct evaluation of `sum g (x-u)^d` and `sum h (x-u)^(2d)` on both
/// sides of `threshold` (samples with `x < threshold` go left).
pub fn param_gradients(g: &[f64], h: &[f64], x: &[f64], threshold: f64, d: usize) -> (SideSums, SideSums) {
    let mut left = SideSums::default();
    let mut right = SideSums::default();
    for ((&g, &h), &x) in g.iter().zip(h).zip(x) {
        let z = (x - threshold).powi(d as i32);
        let side = if x < threshold { &mut left } else { &mut right };
        side.g += g * z;
        side.h += h * z * z;
        side.n += 1;
    }
    (left, right)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CandidateKind {
    Split { threshold: f64 },
    Global,
}

/// A proposed update `gamma * (x - u)^d` to `f_ik`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub output: usize,
    pub feature: usize,
    pub degree: usize,
    pub kind: CandidateKind,
    pub gamma_left: f64,
    pub gamma_right: f64,
    pub gain: f64,
    pub n_left: usize,
    pub n_right: usize,
}

/// Sample-to-bin assignments of one training column, computed once.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    pub fine_bin: Vec<u32>,
    pub coarse_bin: Vec<u32>,
    /// `x - lower(coarse bin)`.
    pub local: Vec<f64>,
    pub fine_counts: Vec<usize>,
    pub coarse_counts: Vec<usize>,
}

impl FeatureCache {
    pub fn new(column: &[f64], bins: &FeatureBins) -> Self {
        let mut fine_counts = vec![0; bins.n_fine()];
        let mut coarse_counts = vec![0; bins.n_coarse()];
        let mut fine_bin = Vec::with_capacity(column.len());
        let mut coarse_bin = Vec::with_capacity(column.len());
        let mut local = Vec::with_capacity(column.len());
        for &x in column {
            let f = bins.fine_bin(x);
            let c = bins.coarse_bin(x);
            fine_counts[f] += 1;
            coarse_counts[c] += 1;
            fine_bin.push(f as u32);
            coarse_bin.push(c as u32);
            local.push(x - bins.coarse_lower(c));
        }
        Self {
            fine_bin,
            coarse_bin,
            local,
            fine_counts,
            coarse_counts,
        }
    }
}

/// Per-coarse-bin moments `sum g t^j` (j <= 3) and `sum h t^j` (j <= 6).
struct Moments {
    g: Vec<[f64; MAX_DEGREE + 1]>,
    h: Vec<[f64; 2 * MAX_DEGREE + 1]>,
}

impl Moments {
    fn collect(cache: &FeatureCache, n_bins: usize, g: &[f64], h: &[f64], max_degree: usize) -> Self {
        let mut mg = vec![[0.0; MAX_DEGREE + 1]; n_bins];
        let mut mh = vec![[0.0; 2 * MAX_DEGREE + 1]; n_bins];
        for n in 0..g.len() {
            let c = cache.coarse_bin[n] as usize;
            let t = cache.local[n];
            let (gn, hn) = (g[n], h[n]);
            let mut p = 1.0;
            for j in 0..=2 * max_degree {
                if j <= max_degree {
                    mg[c][j] += gn * p;
                }
                mh[c][j] += hn * p;
                p *= t;
            }
        }
        Self { g: mg, h: mh }
    }

    /// Sums over coarse bins `range` for monomial degree `d` about `origin`.
    fn side(&self, bins: &FeatureBins, counts: &[usize], range: std::ops::Range<usize>, d: usize, origin: f64) -> SideSums {
        let mut out = SideSums::default();
        for c in range {
            let delta = bins.coarse_lower(c) - origin;
            out.g += shifted_dot(&self.g[c], d, delta);
            out.h += shifted_dot(&self.h[c], 2 * d, delta);
            out.n += counts[c];
        }
        out
    }
}

/// `sum_j C(d, j) delta^(d-j) m[j]`, i.e. the moment of `(t + delta)^d`.
fn shifted_dot(m: &[f64], d: usize, delta: f64) -> f64 {
    let mut acc = 0.0;
    let mut pow = 1.0;
    for j in (0..=d).rev() {
        acc += BINOM[d][j] * pow * m[j];
        pow *= delta;
    }
    acc
}

/// Hyper-parameters the search needs.
#[derive(Debug, Clone, Copy)]
pub struct SearchParams {
    pub learning_rate: f64,
    pub l1: f64,
    pub l2: f64,
    pub min_data_in_leaf: usize,
}

/// Inputs for one (output, feature) search.
pub struct FeatureSearch<'a> {
    pub output: usize,
    pub feature: usize,
    pub bins: &'a FeatureBins,
    pub constraint: FeatureConstraint,
    pub shape: &'a ShapeFunction,
    pub cache: &'a FeatureCache,
    pub params: SearchParams,
}

impl FeatureSearch<'_> {
    /// Best candidate over every degree and threshold, with ties going to
    /// the lower degree, then the lower threshold.
    pub fn best(&self, g: &[f64], h: &[f64]) -> Option<SplitCandidate> {
        let max_degree = usize::from(self.constraint.max_degree);
        let mut best: Option<SplitCandidate> = None;
        let mut offer = |c: Option<SplitCandidate>| {
            if let Some(c) = c {
                if c.gain > 0.0 && c.gain.is_finite() && best.is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        };

        let needs_moments = max_degree >= 1;
        let moments =
            needs_moments.then(|| Moments::collect(self.cache, self.bins.n_coarse(), g, h, max_degree));

        for d in 0..=max_degree {
            if self.constraint.is_global(d) {
                let sums = match &moments {
                    Some(m) => m.side(self.bins, &self.cache.coarse_counts, 0..self.bins.n_coarse(), d, self.bins.min),
                    None => SideSums {
                        g: g.iter().sum(),
                        h: h.iter().sum(),
                        n: g.len(),
                    },
                };
                offer(self.global(d, sums));
            } else if d == 0 {
                self.scan_fine(g, h, &mut offer);
            } else {
                let m = moments.as_ref().expect("moments collected for d >= 1");
                let n_coarse = self.bins.n_coarse();
                for (edge, &u) in self.bins.coarse_edges.iter().enumerate() {
                    let left = m.side(self.bins, &self.cache.coarse_counts, 0..edge + 1, d, u);
                    let right = m.side(self.bins, &self.cache.coarse_counts, edge + 1..n_coarse, d, u);
                    offer(self.split(d, edge, u, left, right));
                }
            }
        }
        best
    }

    fn scan_fine(&self, g: &[f64], h: &[f64], offer: &mut impl FnMut(Option<SplitCandidate>)) {
        let n_fine = self.bins.n_fine();
        let mut hist = vec![SideSums::default(); n_fine];
        for n in 0..g.len() {
            let b = self.cache.fine_bin[n] as usize;
            hist[b].g += g[n];
            hist[b].h += h[n];
        }
        for (b, s) in hist.iter_mut().enumerate() {
            s.n = self.cache.fine_counts[b];
        }
        let total = hist.iter().fold(SideSums::default(), |a, &b| a + b);
        let mut left = SideSums::default();
        for (edge, &u) in self.bins.fine_edges.iter().enumerate() {
            left = left + hist[edge];
            let right = SideSums {
                g: total.g - left.g,
                h: total.h - left.h,
                n: total.n - left.n,
            };
            offer(self.split(0, edge, u, left, right));
        }
    }

    fn check(&self, d: usize, origin: f64) -> Option<ShapeCheck<'_>> {
        self.constraint.is_shape_constrained().then(|| ShapeCheck {
            shape: self.shape,
            bins: self.bins,
            constraint: self.constraint,
            degree: d,
            origin,
            nu: self.params.learning_rate,
        })
    }

    fn global(&self, d: usize, sums: SideSums) -> Option<SplitCandidate> {
        let SearchParams { l1, l2, .. } = self.params;
        let mut gamma = leaf_value(sums.g, sums.h, l1, l2);
        if let Some(check) = self.check(d, self.bins.min) {
            gamma = check.clamp(0..self.bins.n_coarse(), gamma);
        }
        Some(SplitCandidate {
            output: self.output,
            feature: self.feature,
            degree: d,
            kind: CandidateKind::Global,
            gamma_left: gamma,
            gamma_right: gamma,
            gain: side_gain(gamma, sums.g, sums.h),
            n_left: sums.n,
            n_right: 0,
        })
    }

    fn split(&self, d: usize, edge: usize, u: f64, left: SideSums, right: SideSums) -> Option<SplitCandidate> {
        let SearchParams { l1, l2, min_data_in_leaf, .. } = self.params;
        if left.n < min_data_in_leaf || right.n < min_data_in_leaf {
            return None;
        }
        let mut gl = leaf_value(left.g, left.h, l1, l2);
        let mut gr = leaf_value(right.g, right.h, l1, l2);

        if let Some(check) = self.check(d, u) {
            let n_coarse = self.bins.n_coarse();
            // Degree-0 splits live on the fine grid and leave f' untouched.
            let (lpieces, rpieces) = if d == 0 {
                (0..0, 0..0)
            } else {
                (0..edge + 1, edge + 1..n_coarse)
            };
            gl = check.clamp(lpieces.clone(), gl);
            gr = check.clamp(rpieces.clone(), gr);

            // Jumps in f (d = 0) must follow the monotone direction and kinks
            // in f' (d = 1) the curvature direction. If the sides disagree,
            // fall back to the best common value.
            let order_sign = match d {
                0 => self.constraint.monotone,
                1 => self.constraint.curvature,
                _ => 0,
            };
            if order_sign != 0 && f64::from(order_sign) * (gr - gl) < 0.0 {
                let pooled = left + right;
                let gamma = leaf_value(pooled.g, pooled.h, l1, l2);
                let gamma = check.clamp(rpieces, check.clamp(lpieces, gamma));
                gl = gamma;
                gr = gamma;
            }
        }

        Some(SplitCandidate {
            output: self.output,
            feature: self.feature,
            degree: d,
            kind: CandidateKind::Split { threshold: u },
            gamma_left: gl,
            gamma_right: gr,
            gain: side_gain(gl, left.g, left.h) + side_gain(gr, right.g, right.h),
            n_left: left.n,
            n_right: right.n,
        })
    }
}
