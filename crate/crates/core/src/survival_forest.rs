//! Extremely randomized survival trees.
//!
//! Each split draws `k_try` candidate covariates (treatment is the last
//! candidate column, so leaves estimate `Pr(T~ > t | X, W)`), one uniform
//! threshold per candidate between the node's min and max, and keeps the
//! candidate with the largest two-sample log-rank statistic. A split is
//! admissible only if both children keep at least `min_events` observed
//! events. Leaves hold Kaplan-Meier curves stored as drops on a shared
//! time grid, so the ensemble curve is `1 - (1/M) * cumsum(drops)`.

use alloc::vec::Vec;
use alloc::{format, vec};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::curve::SurvivalCurve;
use crate::data::SurvivalDataset;
use crate::matrix::Matrix;
use crate::rng::{self, tag};
use crate::{par, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErtParams {
    /// Ensemble size `M`.
    pub n_trees: usize,
    /// Candidate covariates per split `K`, `1 <= K <= p + 1`.
    pub k_try: usize,
    /// Minimum observed events per leaf.
    pub min_events: usize,
    pub t_max: f64,
    pub seed: u64,
}

impl ErtParams {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be positive".into()));
        }
        if self.k_try == 0 || self.k_try > n_features {
            return Err(Error::InvalidParameter(format!(
                "k_try must lie in 1..={n_features} (covariates plus treatment), got {}",
                self.k_try
            )));
        }
        if self.min_events == 0 {
            return Err(Error::InvalidParameter("min_events must be at least 1".into()));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_max must be positive, got {}", self.t_max)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    /// Kaplan-Meier drops `(grid index, S(t-) - S(t))`.
    Leaf { drops: Vec<(u32, f64)> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTree {
    nodes: Vec<Node>,
}

impl SurvivalTree {
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    fn leaf_drops(&self, x: &[f64], w: bool) -> &[(u32, f64)] {
        let mut k = 0usize;
        loop {
            match &self.nodes[k] {
                Node::Split { feature, threshold, left, right } => {
                    let v = feature_of(x, w, *feature as usize);
                    k = if v <= *threshold { *left as usize } else { *right as usize };
                }
                Node::Leaf { drops } => return drops,
            }
        }
    }
}

#[inline]
fn feature_of(x: &[f64], w: bool, j: usize) -> f64 {
    if j < x.len() {
        x[j]
    } else if w {
        1.0
    } else {
        0.0
    }
}

/// Covariates with the treatment appended as the last column.
#[derive(Clone, Copy)]
pub(crate) struct Features<'a> {
    pub x: &'a Matrix,
    pub w: &'a [bool],
}

impl Features<'_> {
    #[inline]
    fn value(&self, i: usize, j: usize) -> f64 {
        if j < self.x.n_cols() {
            self.x.get(i, j)
        } else if self.w[i] {
            1.0
        } else {
            0.0
        }
    }

    fn n_features(&self) -> usize {
        self.x.n_cols() + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalForest {
    grid: Vec<f64>,
    n_covariates: usize,
    trees: Vec<SurvivalTree>,
}

impl SurvivalForest {
    pub(crate) fn from_trees(grid: Vec<f64>, n_covariates: usize, trees: Vec<SurvivalTree>) -> Self {
        Self { grid, n_covariates, trees }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn trees(&self) -> &[SurvivalTree] {
        &self.trees
    }

    /// Ensemble survival values on [`Self::grid`].
    pub(crate) fn predict_values(&self, x: &[f64], w: bool) -> Vec<f64> {
        let mut acc = vec![0.0; self.grid.len()];
        for tree in &self.trees {
            for &(k, d) in tree.leaf_drops(x, w) {
                acc[k as usize] += d;
            }
        }
        let m = self.trees.len() as f64;
        let mut cum = 0.0;
        acc.iter_mut().for_each(|a| {
            cum += *a;
            *a = (1.0 - cum / m).clamp(0.0, 1.0);
        });
        // Guard against rounding producing a tiny increase.
        for k in 1..acc.len() {
            if acc[k] > acc[k - 1] {
                acc[k] = acc[k - 1];
            }
        }
        acc
    }

    pub fn predict(&self, x: &[f64], w: bool) -> Result<SurvivalCurve> {
        if x.len() != self.n_covariates {
            return Err(Error::DimensionMismatch { expected: self.n_covariates, got: x.len() });
        }
        Ok(SurvivalCurve::from_parts_unchecked(self.grid.clone(), self.predict_values(x, w)))
    }
}

/// Sorted distinct event times `<= t_max`, plus `t_max` itself (imputed times
/// truncated at `t_max` must be representable).
pub(crate) fn event_grid(time: &[f64], event: &[bool], t_max: f64) -> Vec<f64> {
    let mut g: Vec<f64> = time
        .iter()
        .zip(event)
        .filter(|(t, e)| **e && **t <= t_max)
        .map(|(t, _)| *t)
        .collect();
    g.push(t_max);
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

pub fn fit_survival_forest(ds: &SurvivalDataset, params: &ErtParams) -> Result<SurvivalForest> {
    fit_on(ds.covariates(), ds.treatment(), ds.time(), ds.event(), params)
}

pub(crate) fn fit_on(
    x: &Matrix,
    w: &[bool],
    time: &[f64],
    event: &[bool],
    params: &ErtParams,
) -> Result<SurvivalForest> {
    let features = Features { x, w };
    params.validate(features.n_features())?;
    let found = event.iter().filter(|&&e| e).count();
    if found < params.min_events {
        return Err(Error::InsufficientEvents { required: params.min_events, found });
    }
    let grid = event_grid(time, event, params.t_max);
    let trees = par::map_indexed(params.n_trees, |m| {
        let mut rng = rng::stream(params.seed, &[tag::SURVIVAL_TREE, m as u64]);
        grow_tree(features, time, event, &grid, params, &mut rng)
    });
    Ok(SurvivalForest { grid, n_covariates: x.n_cols(), trees })
}

pub fn predict_survival(forest: &SurvivalForest, x: &[f64], w: bool) -> Result<SurvivalCurve> {
    forest.predict(x, w)
}

/// `t -> S(t) / S(c)` for `t >= c`.
pub fn conditional_residual_survival(curve: &SurvivalCurve, c: f64) -> Result<SurvivalCurve> {
    curve.conditional_residual(c)
}

/// Inverse-CDF draw from a residual curve truncated at `t_max`.
pub fn sample_event_time<R: Rng + ?Sized>(residual: &SurvivalCurve, t_max: f64, rng: &mut R) -> f64 {
    residual.residual_quantile(t_max, rng::uniform(rng))
}

pub(crate) fn grow_tree<R: Rng + ?Sized>(
    features: Features<'_>,
    time: &[f64],
    event: &[bool],
    grid: &[f64],
    params: &ErtParams,
    rng: &mut R,
) -> SurvivalTree {
    let n = time.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|&a, &b| time[a as usize].total_cmp(&time[b as usize]));

    let mut nodes = vec![Node::Leaf { drops: Vec::new() }];
    let mut stack = vec![(0usize, 0usize, n)];
    let mut scratch: Vec<u32> = Vec::with_capacity(n);
    let mut is_left: Vec<bool> = Vec::with_capacity(n);

    while let Some((node, lo, hi)) = stack.pop() {
        let split = best_split(features, time, event, &order[lo..hi], params, rng, &mut is_left);
        match split {
            Some((feature, threshold)) => {
                // Stable partition keeps both children sorted by time.
                scratch.clear();
                let mut n_left = 0;
                for k in lo..hi {
                    let i = order[k];
                    if features.value(i as usize, feature) <= threshold {
                        order[lo + n_left] = i;
                        n_left += 1;
                    } else {
                        scratch.push(i);
                    }
                }
                order[lo + n_left..hi].copy_from_slice(&scratch);
                let left = nodes.len();
                nodes.push(Node::Leaf { drops: Vec::new() });
                nodes.push(Node::Leaf { drops: Vec::new() });
                nodes[node] = Node::Split {
                    feature: feature as u32,
                    threshold,
                    left: left as u32,
                    right: left as u32 + 1,
                };
                stack.push((left + 1, lo + n_left, hi));
                stack.push((left, lo, lo + n_left));
            }
            None => {
                nodes[node] = Node::Leaf { drops: leaf_drops(time, event, &order[lo..hi], grid, params.t_max) };
            }
        }
    }
    SurvivalTree { nodes }
}

fn best_split<R: Rng + ?Sized>(
    features: Features<'_>,
    time: &[f64],
    event: &[bool],
    idx: &[u32],
    params: &ErtParams,
    rng: &mut R,
    is_left: &mut Vec<bool>,
) -> Option<(usize, f64)> {
    let n_events = idx.iter().filter(|&&i| event[i as usize]).count();
    if n_events < 2 * params.min_events {
        return None;
    }
    let mut ranges = Vec::new();
    for j in 0..features.n_features() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in idx {
            let v = features.value(i as usize, j);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo < hi {
            ranges.push((j, lo, hi));
        }
    }
    if ranges.is_empty() {
        return None;
    }
    let picks = rng::sample_without_replacement(rng, ranges.len(), params.k_try);
    let thresholds: Vec<(usize, f64)> = picks
        .iter()
        .map(|&c| {
            let (j, lo, hi) = ranges[c];
            (j, rng::uniform_range(rng, lo, hi))
        })
        .collect();

    let mut best: Option<(usize, f64, f64)> = None;
    for (j, thr) in thresholds {
        is_left.clear();
        let mut ev_left = 0;
        for &i in idx {
            let l = features.value(i as usize, j) <= thr;
            is_left.push(l);
            ev_left += usize::from(l && event[i as usize]);
        }
        let ev_right = n_events - ev_left;
        if ev_left < params.min_events || ev_right < params.min_events {
            continue;
        }
        let stat = log_rank(time, event, idx, is_left);
        if best.map_or(true, |(_, _, s)| stat > s) {
            best = Some((j, thr, stat));
        }
    }
    best.map(|(j, thr, _)| (j, thr))
}

/// Squared standardized two-sample log-rank statistic. `idx` must be sorted
/// by time; `is_left[k]` gives the group of `idx[k]`.
pub(crate) fn log_rank(time: &[f64], event: &[bool], idx: &[u32], is_left: &[bool]) -> f64 {
    let n = idx.len();
    let n_left = is_left.iter().filter(|&&l| l).count();
    let (mut removed, mut removed_left) = (0usize, 0usize);
    let (mut observed, mut expected, mut variance) = (0.0, 0.0, 0.0);
    let mut k = 0;
    while k < n {
        let t = time[idx[k] as usize];
        let mut j = k;
        let (mut d, mut d_left, mut c_left) = (0usize, 0usize, 0usize);
        while j < n && time[idx[j] as usize] == t {
            let e = event[idx[j] as usize];
            d += usize::from(e);
            d_left += usize::from(e && is_left[j]);
            c_left += usize::from(is_left[j]);
            j += 1;
        }
        let y = (n - removed) as f64;
        let y_left = (n_left - removed_left) as f64;
        if d > 0 && y > 1.0 {
            let d = d as f64;
            expected += d * y_left / y;
            variance += y_left * (y - y_left) * d * (y - d) / (y * y * (y - 1.0));
            observed += d_left as f64;
        }
        removed += j - k;
        removed_left += c_left;
        k = j;
    }
    if variance > 0.0 {
        (observed - expected) * (observed - expected) / variance
    } else {
        0.0
    }
}

/// Kaplan-Meier leaf estimate as drops on the forest grid. `idx` sorted by time.
fn leaf_drops(time: &[f64], event: &[bool], idx: &[u32], grid: &[f64], t_max: f64) -> Vec<(u32, f64)> {
    let n = idx.len();
    let mut drops = Vec::new();
    let mut s = 1.0;
    let mut removed = 0usize;
    let mut k = 0;
    while k < n {
        let t = time[idx[k] as usize];
        if t > t_max {
            break;
        }
        let mut j = k;
        let mut d = 0usize;
        while j < n && time[idx[j] as usize] == t {
            d += usize::from(event[idx[j] as usize]);
            j += 1;
        }
        if d > 0 {
            let at_risk = (n - removed) as f64;
            let next = s * (1.0 - d as f64 / at_risk);
            let g = grid.partition_point(|&x| x < t).min(grid.len() - 1);
            drops.push((g as u32, s - next));
            s = next;
        }
        removed += j - k;
        k = j;
    }
    drops
}
