//! Regression forests for the nuisance functions.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::split::{best_split, SplitRule};
use crate::matrix::Matrix;
use crate::{par, rng};

#[derive(Clone, Copy, Debug)]
pub(crate) struct RegressionParams {
    pub n_trees: usize,
    pub min_node: usize,
    pub subsample_fraction: f64,
    pub mtry: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { value: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Split { feature, threshold, left, right } => {
                    k = if x[*feature as usize] <= *threshold { *left } else { *right } as usize;
                }
                Node::Leaf { value } => return *value,
            }
        }
    }
}

pub(crate) struct RegressionForest {
    trees: Vec<Tree>,
    /// In-bag membership per tree, sorted.
    in_bag: Vec<Vec<u32>>,
}

impl RegressionForest {
    /// Fits on the rows `rows` of `(x, y, weight)`.
    pub(crate) fn fit(
        x: &Matrix,
        y: &[f64],
        weight: &[f64],
        rows: &[u32],
        params: &RegressionParams,
        stream: &[u64],
    ) -> Self {
        let size = ((rows.len() as f64 * params.subsample_fraction) as usize).clamp(1, rows.len());
        let grown = par::map_indexed(params.n_trees, |t| {
            let mut path = stream.to_vec();
            path.push(t as u64);
            let mut rng = rng::stream(params.seed, &path);
            let mut sample: Vec<u32> = rng::sample_without_replacement(&mut rng, rows.len(), size)
                .into_iter()
                .map(|k| rows[k])
                .collect();
            sample.sort_unstable();
            let tree = grow(x, y, weight, sample.clone(), params, &mut rng);
            (tree, sample)
        });
        let (trees, in_bag) = grown.into_iter().unzip();
        Self { trees, in_bag }
    }

    pub(crate) fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Out-of-bag prediction for training unit `i`; falls back to the full
    /// forest for a unit that is in every tree's subsample.
    pub(crate) fn predict_oob(&self, x: &[f64], i: u32) -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        for (tree, bag) in self.trees.iter().zip(&self.in_bag) {
            if bag.binary_search(&i).is_err() {
                sum += tree.predict(x);
                count += 1;
            }
        }
        if count == 0 {
            self.predict(x)
        } else {
            sum / count as f64
        }
    }
}

fn grow<R: rand::Rng + ?Sized>(
    x: &Matrix,
    y: &[f64],
    weight: &[f64],
    sample: Vec<u32>,
    params: &RegressionParams,
    rng: &mut R,
) -> Tree {
    let p = x.n_cols();
    let rule = SplitRule { min_node: params.min_node, alpha: 0.0, arms: None };
    let mut nodes = vec![Node::Leaf { value: 0.0 }];
    let mut stack = vec![(0usize, sample)];
    while let Some((node, idx)) = stack.pop() {
        let features = rng::sample_without_replacement(rng, p, params.mtry.min(p));
        match best_split(x, &idx, y, weight, &features, &rule) {
            Some((j, thr)) => {
                let (left, right): (Vec<u32>, Vec<u32>) = idx.iter().partition(|&&i| x.get(i as usize, j) <= thr);
                let l = nodes.len();
                nodes.push(Node::Leaf { value: 0.0 });
                nodes.push(Node::Leaf { value: 0.0 });
                nodes[node] = Node::Split { feature: j as u32, threshold: thr, left: l as u32, right: l as u32 + 1 };
                stack.push((l + 1, right));
                stack.push((l, left));
            }
            None => {
                let (mut s, mut w) = (0.0, 0.0);
                for &i in &idx {
                    s += weight[i as usize] * y[i as usize];
                    w += weight[i as usize];
                }
                let value = if w > 0.0 {
                    s / w
                } else {
                    idx.iter().map(|&i| y[i as usize]).sum::<f64>() / idx.len() as f64
                };
                nodes[node] = Node::Leaf { value };
            }
        }
    }
    Tree { nodes }
}
