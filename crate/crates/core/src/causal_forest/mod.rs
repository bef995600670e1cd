//! Honest causal and instrumental forests.
//!
//! Training data are residualized against cross-fitted nuisances:
//! `w~ = W - e(X)`, `y~ = g(T) - m(X)` and, for instrumental forests,
//! `z~ = Z - h(X)` (a causal forest uses `z~ = w~`). Each tree is grown on
//! half of its subsample using the pseudo-outcomes
//! `rho = z~ * (y~ - tau_P * w~)` of its parent node, and its leaves are
//! populated with the other half. With forest weights `alpha_i(x)` the
//! estimate solves `sum_i alpha_i z~_i (y~_i - tau w~_i) = 0`:
//!
//! `tau(x) = sum alpha z~ y~ / sum alpha z~ w~`.
//!
//! Trees come in bags of `ell` that share one half-sample of the data; the
//! spread of bag-level estimates gives the variance estimate.

mod regression;
mod split;

use alloc::vec::Vec;
use alloc::{format, vec};
use serde::{Deserialize, Serialize};

use crate::data::{bools_to_f64, OutcomeTransform, SurvivalDataset};
use crate::matrix::Matrix;
use crate::rng::{self, tag};
use crate::{par, Error, Result};
use regression::{RegressionForest, RegressionParams};
use split::{best_split, default_mtry, Arms, SplitRule};

pub(crate) const PROPENSITY_CLAMP: (f64, f64) = (0.01, 0.99);
const DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForestKind {
    Causal,
    Instrumental,
}

/// How nuisance predictions are kept out of their own training fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossFitting {
    OutOfBag,
    KFold(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Trees per bag `ell`.
    pub ell: usize,
    pub min_node: usize,
    pub honesty_fraction: f64,
    pub subsample_fraction: f64,
    /// Candidate covariates per split; `None` uses `min(p, ceil(sqrt(p)) + 20)`.
    pub mtry: Option<usize>,
    /// Minimum child share of its parent.
    pub alpha: f64,
    /// Trees per nuisance forest; `None` uses `max(50, n_trees / 4)`.
    pub nuisance_trees: Option<usize>,
    pub nuisance_min_node: usize,
    pub cross_fitting: CrossFitting,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 2000,
            ell: 8,
            min_node: 5,
            honesty_fraction: 0.5,
            subsample_fraction: 0.5,
            mtry: None,
            alpha: 0.05,
            nuisance_trees: None,
            nuisance_min_node: 5,
            cross_fitting: CrossFitting::OutOfBag,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidParameter(msg));
        if self.ell < 2 {
            return bad(format!("bag size ell must be at least 2, got {}", self.ell));
        }
        if self.n_trees == 0 || self.n_trees % self.ell != 0 {
            return bad(format!("n_trees ({}) must be a positive multiple of ell ({})", self.n_trees, self.ell));
        }
        if self.min_node == 0 || self.nuisance_min_node == 0 {
            return bad("min_node must be at least 1".into());
        }
        if !(self.honesty_fraction > 0.0 && self.honesty_fraction < 1.0) {
            return bad(format!("honesty_fraction must lie in (0, 1), got {}", self.honesty_fraction));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 0.5) {
            return bad(format!("subsample_fraction must lie in (0, 0.5], got {}", self.subsample_fraction));
        }
        if !(0.0..0.5).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 0.5), got {}", self.alpha));
        }
        if self.mtry == Some(0) || self.nuisance_trees == Some(0) {
            return bad("mtry and nuisance_trees must be positive".into());
        }
        if let CrossFitting::KFold(k) = self.cross_fitting {
            if k < 2 {
                return bad(format!("k-fold cross-fitting needs k >= 2, got {k}"));
            }
        }
        Ok(())
    }

    pub fn n_bags(&self) -> usize {
        self.n_trees / self.ell
    }

    fn nuisance_params(&self, p: usize) -> RegressionParams {
        RegressionParams {
            n_trees: self.nuisance_trees.unwrap_or((self.n_trees / 4).max(50)),
            min_node: self.nuisance_min_node,
            subsample_fraction: 0.5,
            mtry: default_mtry(p),
            seed: rng::derive_seed(self.seed, &[tag::NUISANCE]),
        }
    }
}

/// Complete (uncensored) data for forest estimation: covariates, transformed
/// outcome `y = g(T)`, treatment, optional instrument and sample weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalData {
    x: Matrix,
    y: Vec<f64>,
    w: Vec<bool>,
    z: Option<Vec<bool>>,
    weight: Vec<f64>,
}

impl CausalData {
    pub fn new(x: Matrix, y: Vec<f64>, w: Vec<bool>, z: Option<Vec<bool>>) -> Result<Self> {
        let n = x.n_rows();
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 rows, got {n}")));
        }
        if y.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: y.len() });
        }
        if w.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: w.len() });
        }
        if let Some(z) = &z {
            if z.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: z.len() });
            }
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("row {i}: outcome is not finite")));
        }
        Ok(Self { x, y, w, z, weight: vec![1.0; n] })
    }

    /// Outcome `g(T)` of every unit, treating all of them as observed.
    pub fn from_dataset(ds: &SurvivalDataset, g: &OutcomeTransform) -> Result<Self> {
        let y = ds.time().iter().map(|&t| g.apply(t)).collect();
        Self::new(ds.covariates().clone(), y, ds.treatment().to_vec(), ds.instrument().map(<[bool]>::to_vec))
    }

    pub fn with_weights(mut self, weight: Vec<f64>) -> Result<Self> {
        if weight.len() != self.n() {
            return Err(Error::LengthMismatch { expected: self.n(), got: weight.len() });
        }
        if let Some(i) = weight.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidData(format!("row {i}: sample weight must be finite and nonnegative")));
        }
        self.weight = weight;
        Ok(self)
    }

    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(self.x.clone(), y, self.w.clone(), self.z.clone())?;
        out.weight = self.weight.clone();
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.x.n_rows()
    }

    pub fn p(&self) -> usize {
        self.x.n_cols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn w(&self) -> &[bool] {
        &self.w
    }

    pub fn z(&self) -> Option<&[bool]> {
        self.z.as_deref()
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuisanceEstimates {
    pub e_hat: Vec<f64>,
    pub m_hat: Vec<f64>,
    pub h_hat: Option<Vec<f64>>,
}

fn check_overlap(v: &[bool], what: &'static str) -> Result<()> {
    if v.iter().all(|&b| b == v[0]) {
        return Err(Error::NoOverlap(what, u8::from(v[0])));
    }
    Ok(())
}

/// Cross-fitted `e(X) = P(W=1|X)`, `m(X) = E(g|X)` and, with an instrument,
/// `h(X) = P(Z=1|X)`. All three forests share one random stream, so identical
/// targets give identical predictions.
pub fn fit_nuisances(data: &CausalData, params: &ForestParams) -> Result<NuisanceEstimates> {
    params.validate()?;
    check_overlap(&data.w, "treatment")?;
    if let Some(z) = &data.z {
        check_overlap(z, "instrument")?;
    }
    let np = params.nuisance_params(data.p());
    let (lo, hi) = PROPENSITY_CLAMP;
    let clamp = |v: Vec<f64>| v.into_iter().map(|e| e.clamp(lo, hi)).collect::<Vec<_>>();
    let e_hat = clamp(cross_fit(data, &bools_to_f64(&data.w), &np, params.cross_fitting));
    let m_hat = cross_fit(data, &data.y, &np, params.cross_fitting);
    let h_hat = data.z.as_ref().map(|z| clamp(cross_fit(data, &bools_to_f64(z), &np, params.cross_fitting)));
    Ok(NuisanceEstimates { e_hat, m_hat, h_hat })
}

fn cross_fit(data: &CausalData, target: &[f64], np: &RegressionParams, mode: CrossFitting) -> Vec<f64> {
    let n = data.n();
    match mode {
        CrossFitting::OutOfBag => {
            let rows: Vec<u32> = (0..n as u32).collect();
            let forest = RegressionForest::fit(&data.x, target, &data.weight, &rows, np, &[0]);
            par::map_indexed(n, |i| forest.predict_oob(data.x.row(i), i as u32))
        }
        CrossFitting::KFold(k) => {
            let mut rng = rng::stream(np.seed, &[1]);
            let mut perm: Vec<usize> = (0..n).collect();
            rng::shuffle(&mut rng, &mut perm);
            let mut fold = vec![0usize; n];
            for (pos, &i) in perm.iter().enumerate() {
                fold[i] = pos % k;
            }
            let mut out = vec![0.0; n];
            for f in 0..k {
                let train: Vec<u32> = (0..n as u32).filter(|&i| fold[i as usize] != f).collect();
                let forest = RegressionForest::fit(&data.x, target, &data.weight, &train, np, &[2, f as u64]);
                for i in (0..n).filter(|&i| fold[i] == f) {
                    out[i] = forest.predict(data.x.row(i));
                }
            }
            out
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    /// Estimation units with weighted leaf aggregates
    /// `num = sum w z~ y~ / sum w`, `den = sum w z~ w~ / sum w`.
    Leaf { units: Vec<u32>, weight_sum: f64, num: f64, den: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf(&self, x: &[f64]) -> &Node {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Split { feature, threshold, left, right } => {
                    k = if x[*feature as usize] <= *threshold { *left } else { *right } as usize;
                }
                leaf => return leaf,
            }
        }
    }

    fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CausalForestModel {
    kind: ForestKind,
    params: ForestParams,
    n_covariates: usize,
    trees: Vec<Tree>,
    nuisances: NuisanceEstimates,
    w_res: Vec<f64>,
    z_res: Vec<f64>,
    y_res: Vec<f64>,
    weight: Vec<f64>,
}

/// Point estimate and variance at one query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointEstimate {
    pub tau: f64,
    /// `None` when fewer than two bags have estimation units at `x`.
    pub variance: Option<f64>,
    /// Trees skipped because the leaf of `x` had no estimation units.
    pub empty_leaves: usize,
}

/// Fits nuisances and the forest in one call.
pub fn fit_forest(data: &CausalData, kind: ForestKind, params: &ForestParams) -> Result<CausalForestModel> {
    let nuis = fit_nuisances(data, params)?;
    fit_causal_forest(data, &nuis, kind, params)
}

pub fn fit_causal_forest(
    data: &CausalData,
    nuis: &NuisanceEstimates,
    kind: ForestKind,
    params: &ForestParams,
) -> Result<CausalForestModel> {
    params.validate()?;
    let n = data.n();
    for v in [&nuis.e_hat, &nuis.m_hat] {
        if v.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: v.len() });
        }
    }
    check_overlap(&data.w, "treatment")?;
    let w_res: Vec<f64> = (0..n).map(|i| f64::from(u8::from(data.w[i])) - nuis.e_hat[i]).collect();
    let y_res: Vec<f64> = (0..n).map(|i| data.y[i] - nuis.m_hat[i]).collect();
    let z_res = match kind {
        ForestKind::Causal => w_res.clone(),
        ForestKind::Instrumental => {
            let z = data.z.as_ref().ok_or_else(|| {
                Error::InvalidData("instrumental forest requires an instrument column".into())
            })?;
            let h = nuis.h_hat.as_ref().ok_or_else(|| {
                Error::InvalidParameter("instrumental forest requires instrument propensities".into())
            })?;
            if h.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: h.len() });
            }
            check_overlap(z, "instrument")?;
            (0..n).map(|i| f64::from(u8::from(z[i])) - h[i]).collect()
        }
    };
    let arms = Arms {
        flag: match (kind, data.z.as_deref()) {
            (ForestKind::Instrumental, Some(z)) => z,
            _ => &data.w,
        },
        min_arm: params.min_node,
    };
    let view = TrainView { x: &data.x, w_res: &w_res, z_res: &z_res, y_res: &y_res, weight: &data.weight, arms };

    let half = n / 2;
    let per_tree = ((2.0 * params.subsample_fraction * half as f64) as usize).clamp(2, half.max(2));
    let bags: Vec<Vec<u32>> = par::map_indexed(params.n_bags(), |g| {
        let mut rng = rng::stream(params.seed, &[tag::BAG, g as u64]);
        rng::sample_without_replacement(&mut rng, n, half).into_iter().map(|i| i as u32).collect()
    });
    let mtry = params.mtry.unwrap_or_else(|| default_mtry(data.p())).min(data.p());
    let trees = par::map_indexed(params.n_trees, |b| {
        let mut rng = rng::stream(params.seed, &[tag::CAUSAL_TREE, b as u64]);
        let bag = &bags[b / params.ell];
        let sample: Vec<u32> = if per_tree >= bag.len() {
            bag.clone()
        } else {
            rng::sample_without_replacement(&mut rng, bag.len(), per_tree).into_iter().map(|k| bag[k]).collect()
        };
        grow_honest(&view, sample, mtry, params, &mut rng)
    });

    Ok(CausalForestModel {
        kind,
        params: *params,
        n_covariates: data.p(),
        trees,
        nuisances: nuis.clone(),
        w_res,
        z_res,
        y_res,
        weight: data.weight.clone(),
    })
}

struct TrainView<'a> {
    x: &'a Matrix,
    w_res: &'a [f64],
    z_res: &'a [f64],
    y_res: &'a [f64],
    weight: &'a [f64],
    arms: Arms<'a>,
}

fn grow_honest<R: rand::Rng + ?Sized>(
    v: &TrainView<'_>,
    mut sample: Vec<u32>,
    mtry: usize,
    params: &ForestParams,
    rng: &mut R,
) -> Tree {
    rng::shuffle(rng, &mut sample);
    let n_split = ((sample.len() as f64 * params.honesty_fraction) as usize).clamp(1, sample.len() - 1);
    let estimation = sample.split_off(n_split);
    let structure = sample;

    let rule = SplitRule { min_node: params.min_node, alpha: params.alpha, arms: Some(v.arms) };
    let mut rho = vec![0.0; v.x.n_rows()];
    let mut nodes = vec![Node::Leaf { units: Vec::new(), weight_sum: 0.0, num: 0.0, den: 0.0 }];
    let mut stack = vec![(0usize, structure)];
    while let Some((node, idx)) = stack.pop() {
        let features = rng::sample_without_replacement(rng, v.x.n_cols(), mtry);
        let (mut num, mut den) = (0.0, 0.0);
        for &i in &idx {
            let i = i as usize;
            num += v.weight[i] * v.z_res[i] * v.y_res[i];
            den += v.weight[i] * v.z_res[i] * v.w_res[i];
        }
        let split = if den.abs() > DENOMINATOR_FLOOR {
            let tau = num / den;
            for &i in &idx {
                let i = i as usize;
                rho[i] = v.z_res[i] * (v.y_res[i] - tau * v.w_res[i]);
            }
            best_split(v.x, &idx, &rho, v.weight, &features, &rule)
        } else {
            None
        };
        match split {
            Some((j, thr)) => {
                let (left, right): (Vec<u32>, Vec<u32>) =
                    idx.iter().partition(|&&i| v.x.get(i as usize, j) <= thr);
                let l = nodes.len();
                nodes.push(Node::Leaf { units: Vec::new(), weight_sum: 0.0, num: 0.0, den: 0.0 });
                nodes.push(Node::Leaf { units: Vec::new(), weight_sum: 0.0, num: 0.0, den: 0.0 });
                nodes[node] = Node::Split { feature: j as u32, threshold: thr, left: l as u32, right: l as u32 + 1 };
                stack.push((l + 1, right));
                stack.push((l, left));
            }
            None => {}
        }
    }

    let mut tree = Tree { nodes };
    let mut leaf_units: Vec<Vec<u32>> = vec![Vec::new(); tree.nodes.len()];
    let mut sorted = estimation;
    sorted.sort_unstable();
    for &i in &sorted {
        let mut k = 0;
        while let Node::Split { feature, threshold, left, right } = &tree.nodes[k] {
            k = if v.x.get(i as usize, *feature as usize) <= *threshold { *left } else { *right } as usize;
        }
        leaf_units[k].push(i);
    }
    for (k, units) in leaf_units.into_iter().enumerate() {
        if let Node::Leaf { .. } = tree.nodes[k] {
            let (mut ws, mut num, mut den) = (0.0, 0.0, 0.0);
            for &i in &units {
                let i = i as usize;
                ws += v.weight[i];
                num += v.weight[i] * v.z_res[i] * v.y_res[i];
                den += v.weight[i] * v.z_res[i] * v.w_res[i];
            }
            let (num, den) = if ws > 0.0 { (num / ws, den / ws) } else { (0.0, 0.0) };
            tree.nodes[k] = Node::Leaf { units, weight_sum: ws, num, den };
        }
    }
    tree
}

impl CausalForestModel {
    pub fn kind(&self) -> ForestKind {
        self.kind
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_train(&self) -> usize {
        self.y_res.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn nuisances(&self) -> &NuisanceEstimates {
        &self.nuisances
    }

    /// Number of leaves of each tree.
    pub fn leaf_counts(&self) -> Vec<usize> {
        self.trees.iter().map(Tree::n_leaves).collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_covariates {
            return Err(Error::DimensionMismatch { expected: self.n_covariates, got: x.len() });
        }
        Ok(())
    }

    /// Per-tree leaf aggregates `(num, den)` at `x`; `None` for empty leaves.
    fn tree_terms(&self, x: &[f64]) -> Vec<Option<(f64, f64)>> {
        self.trees
            .iter()
            .map(|t| match t.leaf(x) {
                Node::Leaf { weight_sum, num, den, .. } if *weight_sum > 0.0 => Some((*num, *den)),
                _ => None,
            })
            .collect()
    }

    fn solve(&self, num: f64, den: f64) -> Result<f64> {
        match self.kind {
            ForestKind::Causal if !(den >= DENOMINATOR_FLOOR) => Err(Error::NoTreatmentVariation),
            ForestKind::Instrumental if !(den.abs() >= DENOMINATOR_FLOOR) => Err(Error::WeakInstrument),
            _ => Ok(num / den),
        }
    }

    /// Forest weights `alpha_i(x)`; trees whose leaf has no estimation units
    /// are skipped and the rest renormalized.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut alpha = vec![0.0; self.n_train()];
        let mut used = 0usize;
        for t in &self.trees {
            if let Node::Leaf { units, weight_sum, .. } = t.leaf(x) {
                if *weight_sum > 0.0 {
                    used += 1;
                    for &i in units {
                        alpha[i as usize] += self.weight[i as usize] / weight_sum;
                    }
                }
            }
        }
        if used == 0 {
            return Err(Error::Estimation("no tree has estimation units in the leaf of x".into()));
        }
        let b = used as f64;
        alpha.iter_mut().for_each(|a| *a /= b);
        Ok(alpha)
    }

    pub fn predict(&self, x: &[f64]) -> Result<PointEstimate> {
        self.check_dim(x)?;
        let terms = self.tree_terms(x);
        let valid: Vec<(usize, f64, f64)> =
            terms.iter().enumerate().filter_map(|(b, t)| t.map(|(n, d)| (b, n, d))).collect();
        if valid.is_empty() {
            return Err(Error::Estimation("no tree has estimation units in the leaf of x".into()));
        }
        let count = valid.len() as f64;
        let num = valid.iter().map(|v| v.1).sum::<f64>() / count;
        let den = valid.iter().map(|v| v.2).sum::<f64>() / count;
        let tau = self.solve(num, den)?;

        // Linearized per-tree pseudo-values, grouped by bag.
        let n_bags = self.params.n_bags();
        let mut bag_sum = vec![0.0; n_bags];
        let mut bag_sq = vec![0.0; n_bags];
        let mut bag_count = vec![0usize; n_bags];
        for &(b, nb, db) in &valid {
            let psi = (nb - tau * db) / den;
            let g = b / self.params.ell;
            bag_sum[g] += psi;
            bag_sq[g] += psi * psi;
            bag_count[g] += 1;
        }
        let mut bag_means = Vec::new();
        let mut within = Vec::new();
        for g in 0..n_bags {
            let c = bag_count[g];
            if c == 0 {
                continue;
            }
            let mean = bag_sum[g] / c as f64;
            bag_means.push(tau + mean);
            if c >= 2 {
                let s2 = ((bag_sq[g] - c as f64 * mean * mean) / (c as f64 - 1.0)).max(0.0);
                within.push(s2 / c as f64);
            }
        }
        let within_term = if within.is_empty() { 0.0 } else { within.iter().sum::<f64>() / within.len() as f64 };
        let variance = little_bags_variance(&bag_means, within_term).ok();
        Ok(PointEstimate { tau, variance, empty_leaves: self.trees.len() - valid.len() })
    }

    pub fn tau(&self, x: &[f64]) -> Result<f64> {
        self.predict(x).map(|e| e.tau)
    }

    pub fn variance(&self, x: &[f64]) -> Result<f64> {
        self.predict(x)?
            .variance
            .ok_or(Error::VarianceUnavailable("fewer than two bags have estimation units at x"))
    }

    /// `S_n(tau) = sum_i alpha_i(x) z~_i (y~_i - tau w~_i)` (with `z~ = w~` for
    /// causal forests).
    pub fn score_residual(&self, x: &[f64], tau: f64) -> Result<f64> {
        let alpha = self.weights(x)?;
        Ok(score_sum(&alpha, &self.z_res, &self.y_res, &self.w_res, tau))
    }

    /// Residualized training vectors `(w~, z~, y~)`.
    pub fn residuals(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.w_res, &self.z_res, &self.y_res)
    }
}

pub(crate) fn score_sum(alpha: &[f64], z: &[f64], y: &[f64], w: &[f64], tau: f64) -> f64 {
    alpha.iter().enumerate().map(|(i, a)| a * z[i] * (y[i] - tau * w[i])).sum()
}

/// Bootstrap-of-little-bags variance from bag-level estimates and the mean
/// within-bag Monte Carlo term: `max(0, Var_pop(bags) - within)`.
pub fn little_bags_variance(bag_estimates: &[f64], within: f64) -> Result<f64> {
    let g = bag_estimates.len();
    if g < 2 {
        return Err(Error::VarianceUnavailable("fewer than two bags have estimation units at x"));
    }
    let mean = bag_estimates.iter().sum::<f64>() / g as f64;
    let between = bag_estimates.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / g as f64;
    Ok((between - within).max(0.0))
}

pub fn weights_alpha(model: &CausalForestModel, x: &[f64]) -> Result<Vec<f64>> {
    model.weights(x)
}

/// Closed-form root of the unconfounded score at `x`.
pub fn estimate_tau(model: &CausalForestModel, x: &[f64]) -> Result<f64> {
    if model.kind != ForestKind::Causal {
        return Err(Error::InvalidParameter("estimate_tau needs a causal forest".into()));
    }
    model.tau(x)
}

/// Closed-form root of the instrumental score at `x`.
pub fn estimate_tau_iv(model: &CausalForestModel, x: &[f64]) -> Result<f64> {
    if model.kind != ForestKind::Instrumental {
        return Err(Error::InvalidParameter("estimate_tau_iv needs an instrumental forest".into()));
    }
    model.tau(x)
}

pub fn estimate_variance(model: &CausalForestModel, x: &[f64]) -> Result<f64> {
    model.variance(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn little_bags_hand_example() {
        assert_eq!(little_bags_variance(&[1.0, 3.0], 0.0).unwrap(), 1.0);
        assert_eq!(little_bags_variance(&[2.0, 2.0, 2.0], 0.0).unwrap(), 0.0);
        assert_eq!(little_bags_variance(&[1.0, 3.0], 5.0).unwrap(), 0.0);
        assert!(little_bags_variance(&[1.0], 0.0).is_err());
    }

    #[test]
    fn params_validation() {
        let mut p = ForestParams { n_trees: 16, ell: 8, ..ForestParams::default() };
        assert!(p.validate().is_ok());
        assert_eq!(p.n_bags(), 2);
        p.ell = 1;
        assert!(p.validate().is_err());
        p.ell = 3;
        assert!(p.validate().is_err());
    }

    fn single_leaf_model(leaves: Vec<Vec<u32>>, n: usize) -> CausalForestModel {
        let trees = leaves
            .into_iter()
            .map(|units| Tree {
                nodes: vec![Node::Leaf { weight_sum: units.len() as f64, units, num: 0.0, den: 1.0 }],
            })
            .collect::<Vec<_>>();
        CausalForestModel {
            kind: ForestKind::Causal,
            params: ForestParams { n_trees: trees.len().max(2), ell: 2, ..ForestParams::default() },
            n_covariates: 1,
            trees,
            nuisances: NuisanceEstimates { e_hat: vec![0.5; n], m_hat: vec![0.0; n], h_hat: None },
            w_res: vec![0.5; n],
            z_res: vec![0.5; n],
            y_res: vec![0.0; n],
            weight: vec![1.0; n],
        }
    }

    #[test]
    fn weights_from_leaf_membership() {
        let m = single_leaf_model(vec![vec![2, 5]], 6);
        let a = m.weights(&[0.0]).unwrap();
        assert_eq!(a, vec![0.0, 0.0, 0.5, 0.0, 0.0, 0.5]);

        let m = single_leaf_model(vec![vec![1], vec![1, 2]], 3);
        let a = m.weights(&[0.0]).unwrap();
        assert_eq!(a, vec![0.0, 0.75, 0.25]);
    }
}
