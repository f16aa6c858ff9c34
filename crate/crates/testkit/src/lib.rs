//! Naive reference implementations and synthetic data for testing.
//!
//! Nothing here shares code with the library under test: the oracles are
//! written the slow, obvious way on purpose.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, Normal};

/// Result of an exhaustive single-split search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StumpOracle {
    pub threshold: f64,
    pub gamma_left: f64,
    pub gamma_right: f64,
    /// Reduction of the second-order loss model.
    pub gain: f64,
    /// Value of the second-order loss model after the split.
    pub loss: f64,
}

fn naive_leaf(sum_g: f64, sum_h: f64, l1: f64, l2: f64) -> f64 {
    let shrunk = if sum_g > l1 {
        sum_g - l1
    } else if sum_g < -l1 {
        sum_g + l1
    } else {
        0.0
    };
    if shrunk == 0.0 {
        return 0.0;
    }
    let denom = sum_h + l2;
    -shrunk / if denom > 1e-12 { denom } else { 1e-12 }
}

/// Tries every threshold (samples with `x < u` go left), recomputing both
/// sides from scratch, and returns the split with the lowest model loss.
/// Ties keep the earliest threshold. `None` when no threshold leaves at
/// least `min_leaf` samples per side or none lowers the loss.
pub fn brute_force_stump(
    x: &[f64],
    g: &[f64],
    h: &[f64],
    thresholds: &[f64],
    l1: f64,
    l2: f64,
    min_leaf: usize,
) -> Option<StumpOracle> {
    let mut best: Option<StumpOracle> = None;
    for &u in thresholds {
        let (mut gl, mut hl, mut nl, mut gr, mut hr, mut nr) = (0.0, 0.0, 0, 0.0, 0.0, 0);
        for n in 0..x.len() {
            if x[n] < u {
                gl += g[n];
                hl += h[n];
                nl += 1;
            } else {
                gr += g[n];
                hr += h[n];
                nr += 1;
            }
        }
        if nl < min_leaf || nr < min_leaf {
            continue;
        }
        let a = naive_leaf(gl, hl, l1, l2);
        let b = naive_leaf(gr, hr, l1, l2);
        let mut loss = 0.0;
        for n in 0..x.len() {
            let gamma = if x[n] < u { a } else { b };
            loss += g[n] * gamma + 0.5 * h[n] * gamma * gamma;
        }
        if !(loss < 0.0) {
            continue;
        }
        if best.map_or(true, |b| loss < b.loss) {
            best = Some(StumpOracle {
                threshold: u,
                gamma_left: a,
                gamma_right: b,
                gain: -loss,
                loss,
            });
        }
    }
    best
}

/// Central first and second differences of `f` at `x`.
pub fn finite_diff(f: impl Fn(f64) -> f64, x: f64, delta: f64) -> (f64, f64) {
    let (lo, mid, hi) = (f(x - delta), f(x), f(x + delta));
    ((hi - lo) / (2.0 * delta), (hi - 2.0 * mid + lo) / (delta * delta))
}

/// Quantile edges by sort-and-index: for each `i` in `1..n_bins`, the
/// sample at rank `floor(i n / n_bins)` and the one before it; equal pairs
/// and repeats are skipped. With few distinct values, one edge between
/// each consecutive pair.
pub fn quantile_edges(values: &[f64], n_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct: Vec<f64> = Vec::new();
    for &v in &sorted {
        if distinct.last() != Some(&v) {
            distinct.push(v);
        }
    }
    let mid = |lo: f64, hi: f64| {
        let m = lo + (hi - lo) / 2.0;
        if m > lo && m <= hi {
            m
        } else {
            hi
        }
    };
    if distinct.len() < 2 || n_bins < 2 {
        return Vec::new();
    }
    if distinct.len() <= n_bins {
        return (1..distinct.len()).map(|j| mid(distinct[j - 1], distinct[j])).collect();
    }
    let n = sorted.len();
    let mut out: Vec<f64> = Vec::new();
    for i in 1..n_bins {
        let r = (i * n) / n_bins;
        if r == 0 || r >= n || sorted[r - 1] == sorted[r] {
            continue;
        }
        let e = mid(sorted[r - 1], sorted[r]);
        if out.iter().all(|&p| p < e) {
            out.push(e);
        }
    }
    out
}

/// One boosting update kept as an explicit tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowTree {
    pub output: usize,
    pub feature: usize,
    pub degree: u32,
    /// `Some(u)` for a split at `u`; `None` for a term over the whole axis.
    pub threshold: Option<f64>,
    /// Centre of an unsplit term.
    pub origin: f64,
    pub gamma_left: f64,
    pub gamma_right: f64,
}

/// A model kept as the raw list of its trees, evaluated tree by tree.
#[derive(Debug, Clone, Default)]
pub struct TreeList {
    pub intercepts: Vec<f64>,
    pub learning_rate: f64,
    pub trees: Vec<ShadowTree>,
}

impl TreeList {
    pub fn eval(&self, row: &[f64]) -> Vec<f64> {
        let mut f = self.intercepts.clone();
        for t in &self.trees {
            let x = row[t.feature];
            let (gamma, z) = match t.threshold {
                Some(u) => (if x < u { t.gamma_left } else { t.gamma_right }, x - u),
                None => (t.gamma_left, x - t.origin),
            };
            f[t.output] += self.learning_rate * gamma * z.powi(t.degree as i32);
        }
        f
    }
}

/// Named columns plus a target.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

impl Synthetic {
    pub fn n_samples(&self) -> usize {
        self.target.len()
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Three features on `[-2, 2]` with cubic effects plus unit-variance
/// noise scaled by `noise`.
pub fn cubic_regression(n: usize, noise: f64, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..3).map(|_| uniform(&mut rng, n, -2.0, 2.0)).collect();
    let eps = Normal::new(0.0, noise.max(0.0)).unwrap();
    let target = (0..n)
        .map(|j| {
            let (a, b, c) = (cols[0][j], cols[1][j], cols[2][j]);
            cubic_truth(0, a) + cubic_truth(1, b) + cubic_truth(2, c) + eps.sample(&mut rng)
        })
        .collect();
    Synthetic {
        names: vec!["x0".into(), "x1".into(), "x2".into()],
        columns: cols,
        target,
    }
}

/// The true effect of feature `k` in [`cubic_regression`].
pub fn cubic_truth(k: usize, x: f64) -> f64 {
    match k {
        0 => x * x * x - 2.0 * x,
        1 => 0.5 * x * x,
        _ => (1.5 * x).sin(),
    }
}

/// A decreasing, convex cost response: `y = 10 exp(-0.35 cost) + 0.3 z +
/// noise`, with `cost` on `[0, 10]` and a nuisance feature `z`.
pub fn cost_like(n: usize, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cost = uniform(&mut rng, n, 0.0, 10.0);
    let z = uniform(&mut rng, n, -1.0, 1.0);
    let eps = Normal::new(0.0, 0.5).unwrap();
    let target = (0..n)
        .map(|j| 10.0 * (-0.35 * cost[j]).exp() + 0.3 * z[j] + eps.sample(&mut rng))
        .collect();
    Synthetic {
        names: vec!["cost".into(), "z".into()],
        columns: vec![cost, z],
        target,
    }
}

/// Four-alternative mode choice (walk, cycle, transit, drive) in the
/// spirit of travel-survey data. Each alternative's utility falls with
/// its own travel time (and cost, where it has one); choices are drawn
/// with Gumbel errors. Class labels are `0..4`.
///
/// Alternative-specific columns are named `<attr>_<alt>`; `age` and
/// `distance` are shared.
pub fn lpmc_like(n: usize, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gumbel = Gumbel::new(0.0, 1.0).unwrap();
    let mut c: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 8];
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        let distance: f64 = rng.random_range(0.3..25.0);
        let age: f64 = rng.random_range(16.0..80.0);
        let time_walk = distance * rng.random_range(10.0..14.0);
        let time_cycle = distance * rng.random_range(3.5..5.0);
        let time_transit = distance * rng.random_range(2.0..3.5) + rng.random_range(4.0..15.0);
        let time_drive = distance * rng.random_range(1.2..2.2) + rng.random_range(2.0..8.0);
        let cost_transit = 1.5 + 0.1 * distance * rng.random_range(0.5..1.5);
        let cost_drive = 0.25 * distance * rng.random_range(0.8..1.2) + rng.random_range(0.0..4.0);

        let v = [
            2.0 - 0.09 * time_walk - 0.004 * (age - 40.0).max(0.0) * 2.0,
            0.2 - 0.11 * time_cycle - 0.015 * (age - 30.0).max(0.0),
            0.6 - 0.035 * time_transit - 0.25 * cost_transit,
            0.9 - 0.045 * time_drive - 0.18 * cost_drive + 0.01 * (age - 18.0).min(30.0),
        ];
        let mut best = 0;
        let mut best_u = f64::NEG_INFINITY;
        for (j, vj) in v.iter().enumerate() {
            let u = vj + gumbel.sample(&mut rng);
            if u > best_u {
                best_u = u;
                best = j;
            }
        }
        for (col, val) in c.iter_mut().zip([
            distance,
            age,
            time_walk,
            time_cycle,
            time_transit,
            time_drive,
            cost_transit,
            cost_drive,
        ]) {
            col.push(val);
        }
        target.push(best as f64);
    }
    Synthetic {
        names: [
            "distance",
            "age",
            "time_walk",
            "time_cycle",
            "time_transit",
            "time_drive",
            "cost_transit",
            "cost_drive",
        ]
        .map(String::from)
        .to_vec(),
        columns: c,
        target,
    }
}

/// `y = 2x + N(0, 1)` with `x` uniform on `[0, 1]`.
pub fn linear_gaussian(n: usize, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, n, 0.0, 1.0);
    let eps = Normal::new(0.0, 1.0).unwrap();
    let target = x.iter().map(|&v| 2.0 * v + eps.sample(&mut rng)).collect();
    Synthetic {
        names: vec!["x".into()],
        columns: vec![x],
        target,
    }
}
