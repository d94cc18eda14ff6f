//! Random forest classifier: bootstrap-resampled CART trees with Gini
//! splits over random feature subsets, combined by majority vote.

use std::cmp::Ordering;

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::LabeledSample;
use crate::rng;

pub const FOREST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means ceil(sqrt(n_features)).
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 12,
            min_leaf: 2,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Training samples reaching this leaf, by class (0, 1).
        counts: [usize; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    /// Class voted by the leaf reached by `x`. Equal counts vote landslide.
    pub fn vote(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { counts } => return usize::from(counts[1] >= counts[0]),
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub n_features: usize,
    pub features_per_split: usize,
    pub config: ForestConfig,
    pub trees: Vec<DecisionTree>,
}

/// Gini impurity of a node with `n` samples of which `pos` are positive.
fn gini(n: usize, pos: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    let q = 1.0 - p;
    1.0 - p * p - q * q
}

/// Improvement margin below which two candidate splits count as tied.
pub const GINI_TIE_EPS: f64 = 1e-12;

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    n_features: usize,
    mtry: usize,
    max_depth: usize,
    min_leaf: usize,
    rng: rng::Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let pos = idx.iter().filter(|&&i| self.y[i] == 1).count();
        self.nodes.push(Node::Leaf {
            counts: [idx.len() - pos, pos],
        });
        self.nodes.len() - 1
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let mut feats: Vec<usize> = if self.mtry >= self.n_features {
            (0..self.n_features).collect()
        } else {
            sample_indices(&mut self.rng, self.n_features, self.mtry).into_vec()
        };
        feats.sort_unstable();

        let n = idx.len();
        let total_pos = idx.iter().filter(|&&i| self.y[i] == 1).count();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for &f in &feats {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left_pos = 0;
            for k in 0..n - 1 {
                left_pos += usize::from(self.y[order[k]] == 1);
                let (a, b) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                if a == b {
                    continue;
                }
                let nl = k + 1;
                let nr = n - nl;
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let score = (nl as f64 * gini(nl, left_pos) + nr as f64 * gini(nr, total_pos - left_pos)) / n as f64;
                if best.is_none_or(|(s, _, _)| score < s - GINI_TIE_EPS) {
                    best = Some((score, f, midpoint(a, b)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let pos = idx.iter().filter(|&&i| self.y[i] == 1).count();
        if depth >= self.max_depth || pos == 0 || pos == idx.len() || idx.len() < 2 * self.min_leaf {
            return self.leaf(idx);
        }
        let Some((feature, threshold)) = self.best_split(idx) else {
            return self.leaf(idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: [0, 0] });
        let left = self.build(&l, depth + 1);
        let right = self.build(&r, depth + 1);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }
}

/// Midpoint of two distinct sorted values that still separates them.
pub fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

fn canonical_order(x: &[Vec<f64>], y: &[u8]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| {
        x[a].iter()
            .zip(&x[b])
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(y[a].cmp(&y[b]))
    });
    idx
}

impl ForestModel {
    /// Fit on rows `x` with binary labels `y`. Rows are put in a canonical
    /// order first, so the model does not depend on input order.
    pub fn fit(x: &[Vec<f64>], y: &[u8], config: &ForestConfig) -> Result<ForestModel> {
        if x.len() != y.len() {
            return Err(Error::InvalidInput("feature/label length mismatch".into()));
        }
        if config.n_trees == 0 || config.min_leaf == 0 {
            return Err(Error::Config("n_trees and min_leaf must be >= 1".into()));
        }
        let pos = y.iter().filter(|&&v| v == 1).count();
        if pos < 2 || y.len() - pos < 2 {
            return Err(Error::Data(format!(
                "forest needs >= 2 samples per class (got {pos} positive, {} negative)",
                y.len() - pos
            )));
        }
        let n_features = x[0].len();
        if x.iter().any(|r| r.len() != n_features || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("rows must be finite and equally sized".into()));
        }
        let order = canonical_order(x, y);
        let xs: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
        let ys: Vec<u8> = order.iter().map(|&i| y[i]).collect();
        let mtry = config
            .max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features);

        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::stream(config.seed, t as u64);
                let n = xs.len();
                let idx: Vec<usize> = if config.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut b = Builder {
                    x: &xs,
                    y: &ys,
                    n_features,
                    mtry,
                    max_depth: config.max_depth,
                    min_leaf: config.min_leaf,
                    rng,
                    nodes: Vec::new(),
                };
                b.build(&idx, 0);
                DecisionTree { nodes: b.nodes }
            })
            .collect();

        Ok(ForestModel {
            version: FOREST_SCHEMA_VERSION,
            n_features,
            features_per_split: mtry,
            config: *config,
            trees,
        })
    }

    /// Fraction of trees voting landslide.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let votes: usize = self.trees.iter().map(|t| t.vote(x)).sum();
        votes as f64 / self.trees.len() as f64
    }
}

/// Train a forest on labelled samples (model-input feature scaling).
pub fn train_forest(samples: &[LabeledSample], config: &ForestConfig) -> Result<ForestModel> {
    let x: Vec<Vec<f64>> = samples.iter().map(|s| s.features.model_input().to_vec()).collect();
    let y: Vec<u8> = samples.iter().map(|s| s.label as u8).collect();
    ForestModel::fit(&x, &y, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini(4, 2), 0.5);
        assert_eq!(gini(4, 4), 0.0);
        assert_eq!(gini(0, 0), 0.0);
    }

    #[test]
    fn midpoint_separates_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let m = midpoint(a, b);
        assert!(a <= m && m < b);
        assert_eq!(midpoint(1.0, 3.0), 2.0);
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(ForestModel::fit(&x, &[1, 1, 1], &ForestConfig::default()).is_err());
    }

    #[test]
    fn votes_are_fractions() {
        let leaf = |c: [usize; 2]| DecisionTree {
            nodes: vec![Node::Leaf { counts: c }],
        };
        let mut trees: Vec<DecisionTree> = (0..60).map(|_| leaf([0, 3])).collect();
        trees.extend((0..40).map(|_| leaf([3, 0])));
        let m = ForestModel {
            version: 1,
            n_features: 1,
            features_per_split: 1,
            config: ForestConfig::default(),
            trees,
        };
        assert_eq!(m.predict_proba(&[0.0]), 0.6);
        let all = ForestModel {
            trees: (0..7).map(|_| leaf([1, 2])).collect(),
            ..m
        };
        assert_eq!(all.predict_proba(&[0.0]), 1.0);
    }
}
