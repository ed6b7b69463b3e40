//! Bootstrap-aggregated trees with per-split feature subsampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::tree::{sample_features, DecisionTreeNode, TreeBuilder, TreeConfig};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ForestConfig {
    pub tree_count: usize,
    /// Fraction of features offered per split; `None` uses sqrt(F)/F.
    pub feature_fraction: Option<f64>,
    pub bootstrap: bool,
    pub tree: TreeConfig,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            tree_count: 50,
            feature_fraction: None,
            bootstrap: true,
            tree: TreeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTreeNode>,
    pub class_count: usize,
}

impl ForestModel {
    /// Majority vote over per-tree argmax; probabilities are vote fractions.
    /// Ties break to the lowest class index.
    pub fn predict(&self, vector: &[f64]) -> (usize, Vec<f64>) {
        let mut votes = vec![0usize; self.class_count];
        for tree in &self.trees {
            votes[crate::gnn::argmax(tree.distribution(vector))] += 1;
        }
        let probs: Vec<f64> = votes
            .iter()
            .map(|&v| v as f64 / self.trees.len() as f64)
            .collect();
        (crate::gnn::argmax(&probs), probs)
    }
}

pub fn train_random_forest(
    vectors: &[Vec<f64>],
    labels: &[usize],
    class_count: usize,
    config: ForestConfig,
    seed: u64,
) -> Result<ForestModel> {
    if config.tree_count < 1 {
        return Err(Error::Usage("forest needs at least one tree".into()));
    }
    if vectors.is_empty() || vectors.len() != labels.len() {
        return Err(Error::EmptyInput("forest needs aligned non-empty inputs"));
    }
    let feature_count = vectors[0].len();
    let fraction = config
        .feature_fraction
        .unwrap_or_else(|| (feature_count as f64).sqrt() / feature_count as f64);
    let per_split = ((feature_count as f64 * fraction).round() as usize).clamp(1, feature_count);

    use rayon::prelude::*;
    let trees: Vec<DecisionTreeNode> = (0..config.tree_count)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed.wrapping_add((t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            );
            let indices: Vec<usize> = if config.bootstrap {
                (0..vectors.len())
                    .map(|_| rng.random_range(0..vectors.len()))
                    .collect()
            } else {
                (0..vectors.len()).collect()
            };
            let builder = TreeBuilder {
                x: vectors,
                y: labels,
                class_count,
                config: config.tree,
            };
            let mut pick = move || {
                if per_split == feature_count {
                    (0..feature_count).collect()
                } else {
                    sample_features(feature_count, per_split, &mut rng)
                }
            };
            builder.build(&indices, 0, &mut pick)
        })
        .collect();
    Ok(ForestModel { trees, class_count })
}
