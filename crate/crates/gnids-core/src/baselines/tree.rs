//! Information-gain decision tree over numeric features.
//!
//! The classic categorical algorithm adapted to numeric features with
//! midpoint threshold splits, the standard variant used by flow-dataset
//! tooling. Splits maximize information gain; ties break to the lowest
//! feature index, then the lowest threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 20,
            min_samples_leaf: 5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum DecisionTreeNode {
    Leaf {
        /// Class distribution at the leaf; sums to 1.
        distribution: Vec<f64>,
    },
    Split {
        feature: usize,
        /// `value <= threshold` goes left.
        threshold: f64,
        left: Box<DecisionTreeNode>,
        right: Box<DecisionTreeNode>,
    },
}

impl DecisionTreeNode {
    pub fn depth(&self) -> usize {
        match self {
            DecisionTreeNode::Leaf { .. } => 0,
            DecisionTreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn distribution<'a>(&'a self, vector: &[f64]) -> &'a [f64] {
        match self {
            DecisionTreeNode::Leaf { distribution } => distribution,
            DecisionTreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if vector[*feature] <= *threshold {
                    left.distribution(vector)
                } else {
                    right.distribution(vector)
                }
            }
        }
    }
}

fn entropy(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Best (gain, threshold) for one feature over the node's rows, scanning
/// sorted values with running class counts. Both children must keep at
/// least `min_leaf` rows.
fn best_threshold_for_feature(
    values: &mut Vec<(f64, usize)>,
    class_count: usize,
    min_leaf: usize,
) -> Option<(f64, f64)> {
    values.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));
    let total = values.len();
    let mut total_counts = vec![0usize; class_count];
    for &(_, label) in values.iter() {
        total_counts[label] += 1;
    }
    let parent = entropy(&total_counts, total);

    let mut left_counts = vec![0usize; class_count];
    let mut best: Option<(f64, f64)> = None;
    for i in 0..total - 1 {
        left_counts[values[i].1] += 1;
        if values[i + 1].0 <= values[i].0 {
            continue;
        }
        let left_n = i + 1;
        let right_n = total - left_n;
        if left_n < min_leaf || right_n < min_leaf {
            continue;
        }
        let right_counts: Vec<usize> = total_counts
            .iter()
            .zip(&left_counts)
            .map(|(&t, &l)| t - l)
            .collect();
        let gain = parent
            - (left_n as f64 / total as f64) * entropy(&left_counts, left_n)
            - (right_n as f64 / total as f64) * entropy(&right_counts, right_n);
        let threshold = values[i].0 + (values[i + 1].0 - values[i].0) / 2.0;
        // strict improvement keeps the lowest threshold on gain ties
        if best.map_or(gain > 0.0, |(g, _)| gain > g) {
            best = Some((gain, threshold));
        }
    }
    best
}

pub(crate) struct TreeBuilder<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [usize],
    pub class_count: usize,
    pub config: TreeConfig,
}

impl TreeBuilder<'_> {
    fn leaf(&self, indices: &[usize]) -> DecisionTreeNode {
        let mut counts = vec![0usize; self.class_count];
        for &i in indices {
            counts[self.y[i]] += 1;
        }
        let n = indices.len().max(1) as f64;
        DecisionTreeNode::Leaf {
            distribution: counts.iter().map(|&c| c as f64 / n).collect(),
        }
    }

    /// `features` yields the candidate feature set per split, ascending.
    pub fn build(
        &self,
        indices: &[usize],
        depth: usize,
        features: &mut dyn FnMut() -> Vec<usize>,
    ) -> DecisionTreeNode {
        let first = self.y[indices[0]];
        let pure = indices.iter().all(|&i| self.y[i] == first);
        if pure
            || depth >= self.config.max_depth
            || indices.len() < 2 * self.config.min_samples_leaf
        {
            return self.leaf(indices);
        }

        let mut best: Option<(f64, usize, f64)> = None;
        for feature in features() {
            let mut values: Vec<(f64, usize)> = indices
                .iter()
                .map(|&i| (self.x[i][feature], self.y[i]))
                .collect();
            if let Some((gain, threshold)) =
                best_threshold_for_feature(&mut values, self.class_count, self.config.min_samples_leaf)
            {
                // features iterate ascending, so strict improvement breaks
                // gain ties to the lowest feature index
                if best.map_or(true, |(g, _, _)| gain > g) {
                    best = Some((gain, feature, threshold));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return self.leaf(indices);
        };

        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.build(&left_idx, depth + 1, features);
        let right = self.build(&right_idx, depth + 1, features);
        DecisionTreeNode::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Train a tree on all features, deterministic given input order.
pub fn train_id3(
    vectors: &[Vec<f64>],
    labels: &[usize],
    class_count: usize,
    config: TreeConfig,
) -> Result<DecisionTreeNode> {
    if vectors.is_empty() || vectors.len() != labels.len() {
        return Err(Error::EmptyInput("train_id3 needs aligned non-empty inputs"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
        return Err(Error::Usage(format!(
            "label {bad} out of range for {class_count} classes"
        )));
    }
    let builder = TreeBuilder {
        x: vectors,
        y: labels,
        class_count,
        config,
    };
    let indices: Vec<usize> = (0..vectors.len()).collect();
    let feature_count = vectors[0].len();
    let mut all = move || (0..feature_count).collect::<Vec<usize>>();
    Ok(builder.build(&indices, 0, &mut all))
}

/// Sample `m` distinct features, returned ascending.
pub(crate) fn sample_features<R: Rng>(feature_count: usize, m: usize, rng: &mut R) -> Vec<usize> {
    let m = m.clamp(1, feature_count);
    let mut picked = rand::seq::index::sample(rng, feature_count, m).into_vec();
    picked.sort_unstable();
    picked
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_dataset_is_one_pure_leaf() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![2, 2, 2];
        let tree = train_id3(&x, &y, 4, TreeConfig::default()).unwrap();
        match &tree {
            DecisionTreeNode::Leaf { distribution } => {
                assert_eq!(distribution[2], 1.0);
                assert_eq!(distribution.iter().sum::<f64>(), 1.0);
            }
            _ => panic!("expected a leaf"),
        }
    }

    #[test]
    fn separable_1d_dataset_splits_between_clusters() {
        let x = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
        let y = vec![0, 0, 1, 1];
        let cfg = TreeConfig {
            max_depth: 5,
            min_samples_leaf: 1,
        };
        let tree = train_id3(&x, &y, 2, cfg).unwrap();
        match &tree {
            DecisionTreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > 1.0 && *threshold < 10.0, "threshold {threshold}");
                assert!(matches!(**left, DecisionTreeNode::Leaf { .. }));
                assert!(matches!(**right, DecisionTreeNode::Leaf { .. }));
                assert_eq!(left.distribution(&[0.0])[0], 1.0);
                assert_eq!(right.distribution(&[10.5])[1], 1.0);
            }
            _ => panic!("expected a split"),
        }
    }

    /// Exhaustive oracle: evaluate every (feature, midpoint) candidate by
    /// direct counting and compare with the chosen root split.
    #[test]
    fn root_split_matches_exhaustive_enumeration() {
        let mut state = 99u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) * 4.0 - 2.0
        };
        let x: Vec<Vec<f64>> = (0..20).map(|_| vec![next(), next()]).collect();
        let y: Vec<usize> = x
            .iter()
            .map(|v| if v[0] * 0.7 + v[1] > 0.2 { 1 } else { 0 })
            .collect();

        let entropy_of = |labels: &[usize]| -> f64 {
            let mut counts = [0usize; 2];
            for &l in labels {
                counts[l] += 1;
            }
            let n = labels.len() as f64;
            counts
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let p = c as f64 / n;
                    -p * p.ln()
                })
                .sum()
        };
        let parent = entropy_of(&y);
        let mut best_gain = f64::NEG_INFINITY;
        let mut best_split = (0usize, 0.0f64);
        for f in 0..2 {
            let mut vals: Vec<f64> = x.iter().map(|v| v[f]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in vals.windows(2) {
                if w[1] <= w[0] {
                    continue;
                }
                let threshold = w[0] + (w[1] - w[0]) / 2.0;
                let (l, r): (Vec<usize>, Vec<usize>) = (0..20).partition(|&i| x[i][f] <= threshold);
                if l.is_empty() || r.is_empty() {
                    continue;
                }
                let ly: Vec<usize> = l.iter().map(|&i| y[i]).collect();
                let ry: Vec<usize> = r.iter().map(|&i| y[i]).collect();
                let gain = parent
                    - (ly.len() as f64 / 20.0) * entropy_of(&ly)
                    - (ry.len() as f64 / 20.0) * entropy_of(&ry);
                if gain > best_gain {
                    best_gain = gain;
                    best_split = (f, threshold);
                }
            }
        }

        let cfg = TreeConfig {
            max_depth: 1,
            min_samples_leaf: 1,
        };
        let tree = train_id3(&x, &y, 2, cfg).unwrap();
        match tree {
            DecisionTreeNode::Split {
                feature, threshold, ..
            } => {
                assert_eq!(feature, best_split.0);
                assert!((threshold - best_split.1).abs() < 1e-12);
            }
            _ => panic!("expected a split at the root"),
        }
    }

    #[test]
    fn every_vector_reaches_exactly_one_leaf() {
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i % 7) as f64, (i % 11) as f64])
            .collect();
        let y: Vec<usize> = (0..60).map(|i| (i % 3) as usize).collect();
        let cfg = TreeConfig {
            max_depth: 6,
            min_samples_leaf: 2,
        };
        let tree = train_id3(&x, &y, 3, cfg).unwrap();
        for v in &x {
            let dist = tree.distribution(v);
            assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(tree.depth() <= 6);
    }
}
