//! Flow-level baseline classifiers: decision tree, random forest, and MLP.
//!
//! Baselines consume one feature vector per flow and never see the window's
//! other flows, which is exactly the contrast the robustness sweeps measure.

pub mod forest;
pub mod mlp;
pub mod tree;

pub use forest::{train_random_forest, ForestConfig, ForestModel};
pub use mlp::{train_mlp, MlpConfig, MlpModel};
pub use tree::{train_id3, DecisionTreeNode, TreeConfig};

use serde::{Deserialize, Serialize};

use crate::gnn::argmax;
use crate::nn::softmax_row;

/// A trained flow-level classifier.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum BaselineModel {
    Tree {
        root: DecisionTreeNode,
        class_count: usize,
    },
    Forest(ForestModel),
    Mlp(MlpModel),
}

impl BaselineModel {
    pub fn class_count(&self) -> usize {
        match self {
            BaselineModel::Tree { class_count, .. } => *class_count,
            BaselineModel::Forest(f) => f.class_count,
            BaselineModel::Mlp(m) => m.class_count,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            BaselineModel::Tree { .. } => "id3",
            BaselineModel::Forest(_) => "rf",
            BaselineModel::Mlp(_) => "mlp",
        }
    }
}

/// Predict one flow: leaf distribution for trees, vote fractions for
/// forests, softmax for the MLP. Ties break to the lowest class index.
pub fn predict_baseline(model: &BaselineModel, vector: &[f64]) -> (usize, Vec<f64>) {
    match model {
        BaselineModel::Tree { root, .. } => {
            let dist = root.distribution(vector).to_vec();
            (argmax(&dist), dist)
        }
        BaselineModel::Forest(f) => f.predict(vector),
        BaselineModel::Mlp(m) => {
            let logits = m
                .logits(std::slice::from_ref(&vector.to_vec()))
                .expect("input dim checked at training time");
            let probs = softmax_row(logits.row(0));
            (argmax(&probs), probs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_leaf_predicts_its_class_with_probability_one() {
        let model = BaselineModel::Tree {
            root: DecisionTreeNode::Leaf {
                distribution: vec![0.0, 1.0, 0.0],
            },
            class_count: 3,
        };
        let (class, probs) = predict_baseline(&model, &[1.0]);
        assert_eq!(class, 1);
        assert_eq!(probs[1], 1.0);
    }

    #[test]
    fn three_tree_vote_gives_two_thirds() {
        let leaf = |class: usize| DecisionTreeNode::Leaf {
            distribution: (0..3).map(|c| if c == class { 1.0 } else { 0.0 }).collect(),
        };
        let model = BaselineModel::Forest(ForestModel {
            trees: vec![leaf(0), leaf(0), leaf(1)],
            class_count: 3,
        });
        let (class, probs) = predict_baseline(&model, &[0.0]);
        assert_eq!(class, 0);
        assert!((probs[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((probs[1] - 1.0 / 3.0).abs() < 1e-12);
    }
}
