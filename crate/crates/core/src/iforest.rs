//! Isolation Forest.
//!
//! Each tree is grown on a random subsample by splitting on a random feature
//! at a uniform threshold strictly between the node's min and max. A point's
//! anomaly score is `2^(-E[h(x)] / c(psi))` where `h` is the path length
//! (with the `c(size)` correction at unresolved leaves).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::derive_seed;
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingSubset {
    /// Every training sample regardless of label.
    #[default]
    All,
    Normals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IForestConfig {
    pub n_trees: usize,
    pub subsample_size: usize,
    pub contamination: f64,
    pub train_on: TrainingSubset,
}

impl Default for IForestConfig {
    fn default() -> Self {
        IForestConfig {
            n_trees: 100,
            subsample_size: 256,
            contamination: 0.33,
            train_on: TrainingSubset::All,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Internal {
        feature: usize,
        split: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        size: usize,
        depth: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    pub root: Node,
    pub max_depth: usize,
}

impl IsolationTree {
    pub fn max_leaf_depth(&self) -> usize {
        fn walk(n: &Node) -> usize {
            match n {
                Node::Leaf { depth, .. } => *depth,
                Node::Internal { left, right, .. } => walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    pub trees: Vec<IsolationTree>,
    pub subsample_size: usize,
    pub contamination: f64,
    pub threshold: f64,
    pub seed: u64,
    pub feature_dim: usize,
    pub calibration_scores: Vec<f64>,
}

/// Harmonic number `H(n) = 1 + 1/2 + ... + 1/n`.
fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

/// Average unsuccessful-search path length in a binary search tree of `m` points.
pub fn average_path_length(m: usize) -> f64 {
    if m <= 1 {
        0.0
    } else {
        2.0 * harmonic(m - 1) - 2.0 * (m - 1) as f64 / m as f64
    }
}

fn grow(data: &[&[f64]], depth: usize, max_depth: usize, rng: &mut ChaCha8Rng) -> Node {
    let leaf = Node::Leaf {
        size: data.len(),
        depth,
    };
    if data.len() <= 1 || depth >= max_depth {
        return leaf;
    }
    let dim = data[0].len();
    let ranges: Vec<(usize, f64, f64)> = (0..dim)
        .filter_map(|f| {
            let (lo, hi) = data
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x[f]), hi.max(x[f])));
            (hi > lo).then_some((f, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        // Duplicate points cannot be separated.
        return leaf;
    }
    let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
    let split = loop {
        let s = rng.random_range(lo..hi);
        if s > lo {
            break s;
        }
    };
    let (left, right): (Vec<&[f64]>, Vec<&[f64]>) = data.iter().partition(|x| x[feature] < split);
    Node::Internal {
        feature,
        split,
        left: Box::new(grow(&left, depth + 1, max_depth, rng)),
        right: Box::new(grow(&right, depth + 1, max_depth, rng)),
    }
}

/// Builds `n_trees` trees, each on its own subsample of size `min(psi, |data|)`.
/// Tree `t` draws from an independent stream derived from `seed`.
pub fn build_forest(data: &[Vec<f64>], n_trees: usize, psi: usize, seed: u64) -> Result<IsolationForestModel> {
    if n_trees == 0 {
        return Err(Error::Config("n_trees must be positive".into()));
    }
    if data.is_empty() {
        return Err(Error::TrainingData("isolation forest needs at least one sample".into()));
    }
    let dim = data[0].len();
    if let Some(bad) = data.iter().find(|x| x.len() != dim) {
        return Err(Error::shape(format!("feature dim {dim}"), bad.len()));
    }
    let psi = psi.clamp(1, data.len());
    let max_depth = (psi as f64).log2().ceil() as usize;
    let trees = (0..n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let idx = rand::seq::index::sample(&mut rng, data.len(), psi);
            let sample: Vec<&[f64]> = idx.iter().map(|i| data[i].as_slice()).collect();
            IsolationTree {
                root: grow(&sample, 0, max_depth, &mut rng),
                max_depth,
            }
        })
        .collect();
    Ok(IsolationForestModel {
        trees,
        subsample_size: psi,
        contamination: IForestConfig::default().contamination,
        threshold: f64::NAN,
        seed,
        feature_dim: dim,
        calibration_scores: Vec::new(),
    })
}

/// `depth(leaf) + c(leaf size)`.
pub fn path_length(tree: &IsolationTree, x: &[f64]) -> f64 {
    let mut node = &tree.root;
    loop {
        match node {
            Node::Leaf { size, depth } => return *depth as f64 + average_path_length(*size),
            Node::Internal {
                feature,
                split,
                left,
                right,
            } => node = if x[*feature] < *split { left } else { right },
        }
    }
}

/// `2^(-mean_path / c(psi))`, the score form for a given mean path length.
pub fn score_from_mean_path(mean_path: f64, psi: usize) -> f64 {
    let c = average_path_length(psi);
    if c == 0.0 {
        return 0.5;
    }
    2f64.powf(-mean_path / c)
}

pub fn if_score(model: &IsolationForestModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.feature_dim {
        return Err(Error::shape(format!("feature dim {}", model.feature_dim), x.len()));
    }
    let mean = model.trees.iter().map(|t| path_length(t, x)).sum::<f64>() / model.trees.len() as f64;
    Ok(score_from_mean_path(mean, model.subsample_size))
}

/// `(1 - contamination)`-quantile of the training scores.
pub fn if_threshold(training_scores: &[f64], contamination: f64) -> Result<f64> {
    if !(contamination > 0.0 && contamination <= 0.5) {
        return Err(Error::Config(format!("contamination must lie in (0, 0.5], got {contamination}")));
    }
    if training_scores.is_empty() {
        return Err(Error::Evaluation("no training scores for the threshold".into()));
    }
    Ok(stats::quantile(training_scores, 1.0 - contamination))
}

impl IsolationForestModel {
    pub fn score_batch(&self, data: &[Vec<f64>]) -> Result<Vec<f64>> {
        data.iter().map(|x| if_score(self, x)).collect()
    }

    pub fn calibrate(&mut self, training: &[Vec<f64>], contamination: f64) -> Result<f64> {
        let scores = self.score_batch(training)?;
        self.threshold = if_threshold(&scores, contamination)?;
        self.contamination = contamination;
        self.calibration_scores = scores;
        Ok(self.threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn c_values() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        assert!((average_path_length(3) - (2.0 * 1.5 - 4.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn path_length_at_leaves() {
        let leaf = |size, depth| IsolationTree {
            root: Node::Leaf { size, depth },
            max_depth: 8,
        };
        assert_eq!(path_length(&leaf(1, 3), &[0.0]), 3.0);
        assert_eq!(path_length(&leaf(2, 3), &[0.0]), 4.0);
        assert_eq!(path_length(&leaf(256, 0), &[0.0]), average_path_length(256));
    }

    #[test]
    fn score_form() {
        let c = average_path_length(256);
        assert!((score_from_mean_path(c, 256) - 0.5).abs() < 1e-15);
        assert!((score_from_mean_path(2.0 * c, 256) - 0.25).abs() < 1e-15);
        assert!((score_from_mean_path(1e-12, 256) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn forest_sizes() {
        let data: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let model = build_forest(&data, 100, 256, 1).unwrap();
        assert_eq!(model.trees.len(), 100);
        assert_eq!(model.subsample_size, 50);
        for t in &model.trees {
            assert!(t.max_leaf_depth() <= 6);
        }
        assert!(matches!(build_forest(&data, 0, 256, 1), Err(Error::Config(_))));
    }

    #[test]
    fn single_point_and_constant_data() {
        let model = build_forest(&[vec![1.0, 2.0]], 10, 256, 0).unwrap();
        assert!(model
            .trees
            .iter()
            .all(|t| matches!(t.root, Node::Leaf { size: 1, depth: 0 })));

        let constant = vec![vec![3.0, 3.0]; 20];
        let model = build_forest(&constant, 5, 256, 0).unwrap();
        assert!(model
            .trees
            .iter()
            .all(|t| matches!(t.root, Node::Leaf { size: 20, depth: 0 })));
    }

    #[test]
    fn threshold_cases() {
        assert_eq!(if_threshold(&[0.1; 10], 0.33).unwrap(), 0.1);
        assert!(![0.1f64; 10].iter().any(|s| *s > 0.1));

        let scores: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let t = if_threshold(&scores, 0.33).unwrap();
        // Sorting oracle: the top 33 values are strictly above the 0.67 quantile.
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted[66] <= t && t < sorted[67]);
        assert_eq!(scores.iter().filter(|s| **s > t).count(), 33);

        assert!(matches!(if_threshold(&scores, 0.6), Err(Error::Config(_))));
        assert!(matches!(if_threshold(&scores, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn outlier_scores_highest() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut data: Vec<Vec<f64>> = (0..99).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        data.push(vec![10.5, 0.5]);
        let model = build_forest(&data, 100, 256, 3).unwrap();
        let scores = model.score_batch(&data).unwrap();
        let top = scores.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(top, 99);
    }

    #[test]
    fn json_roundtrip() {
        let data: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64 * 0.3]).collect();
        let mut model = build_forest(&data, 3, 8, 2).unwrap();
        model.calibrate(&data, 0.33).unwrap();
        let back: IsolationForestModel = serde_json::from_str(&serde_json::to_string(&model).unwrap()).unwrap();
        assert_eq!(back, model);
    }

    proptest! {
        #[test]
        fn scores_in_open_unit_interval(
            points in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 2..40),
            probe in proptest::collection::vec(-50.0f64..50.0, 3),
            seed in 0u64..100,
        ) {
            let model = build_forest(&points, 10, 256, seed).unwrap();
            let s = if_score(&model, &probe).unwrap();
            prop_assert!(s > 0.0 && s < 1.0);
        }

        #[test]
        fn score_decreases_with_path_length(a in 0.0f64..20.0, b in 0.0f64..20.0) {
            prop_assume!(a < b);
            prop_assert!(score_from_mean_path(a, 256) > score_from_mean_path(b, 256));
        }
    }
}
