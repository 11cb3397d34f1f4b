//! AdaBoost with shallow decision trees (multi-class SAMME weighting).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::matrix::Matrix;
use crate::seed;

use super::tree::{build_tree, Criterion, FeatureSubset, Splitter, TreeModel, TreeParams};
use super::{argmax_tie_smallest, HyperValue, HyperView, Model, ModelState, Primitive};

#[derive(Clone, Debug)]
pub struct AdaBoostParams {
    pub n_estimators: usize,
    /// Depth cap for every base tree.
    pub base_max_depth: usize,
}

/// Weighted vote over boosted trees.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdaBoostModel {
    trees: Vec<TreeModel>,
    alphas: Vec<f64>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl Model for AdaBoostModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_batch(&self, features: &Matrix) -> Vec<usize> {
        features
            .rows()
            .map(|row| {
                let mut scores = vec![0.0; self.n_classes];
                for (tree, &alpha) in self.trees.iter().zip(&self.alphas) {
                    scores[tree.predict_row(row)] += alpha;
                }
                argmax_tie_smallest(&scores)
            })
            .collect()
    }

    fn state(&self) -> ModelState {
        ModelState::AdaBoost(self.clone())
    }
}

/// Boosts weighted trees: each round fits a tree under the current sample
/// weights, scores its weighted error, and up-weights the rows it missed.
/// A perfect round keeps its tree with a capped weight and stops; a round
/// worse than chance stops boosting (the first tree is always kept so a
/// one-estimator ensemble equals its base tree).
pub fn fit_adaboost(
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    params: &AdaBoostParams,
    seed_value: u64,
) -> AdaBoostModel {
    let n = features.n_rows();
    let rows: Vec<usize> = (0..n).collect();
    let tree_params = TreeParams {
        max_depth: Some(params.base_max_depth),
        min_samples_leaf: 1,
        criterion: Criterion::Gini,
        feature_subset: FeatureSubset::All,
        splitter: Splitter::Best,
    };
    // SAMME's chance level uses the classes actually present.
    let mut present = vec![false; n_classes];
    for &l in labels {
        present[l] = true;
    }
    let k = present.iter().filter(|p| **p).count().max(2) as f64;
    let chance = 1.0 - 1.0 / k;

    // Round 0 uses unit weights (not 1/n): integer-valued weights keep the
    // weighted split arithmetic bit-identical to the unweighted builder, so
    // a one-estimator ensemble reproduces the plain tree exactly.
    let mut weights = vec![1.0; n];
    let mut trees = Vec::new();
    let mut alphas = Vec::new();
    for t in 0..params.n_estimators {
        let mut rng = seed::rng(seed_value, "boost-round", &[t as u64]);
        let tree = build_tree(
            features,
            labels,
            Some(&weights),
            &rows,
            n_classes,
            &tree_params,
            &mut rng,
        );
        let preds: Vec<usize> = features.rows().map(|r| tree.predict_row(r)).collect();
        let total: f64 = weights.iter().sum();
        let err: f64 = preds
            .iter()
            .zip(labels)
            .zip(&weights)
            .filter(|((p, y), _)| p != y)
            .map(|(_, w)| w)
            .sum::<f64>()
            / total;

        if err <= 1e-12 {
            // Perfect base learner; cap its weight and stop boosting.
            trees.push(tree);
            alphas.push(((1.0 - 1e-10) / 1e-10f64).ln() + (k - 1.0).ln());
            break;
        }
        if err >= chance {
            if t == 0 {
                // Worse than chance on round one: keep the tree with a
                // nominal weight so the ensemble still predicts something.
                trees.push(tree);
                alphas.push(1e-6);
            }
            break;
        }

        let alpha = ((1.0 - err) / err).ln() + (k - 1.0).ln();
        trees.push(tree);
        alphas.push(alpha);

        let mut new_total = 0.0;
        for ((w, p), y) in weights.iter_mut().zip(&preds).zip(labels) {
            if p != y {
                *w *= alpha.exp();
            }
            new_total += *w;
        }
        // Rescale to mean 1 so repeated boosting cannot overflow.
        let scale = n as f64 / new_total;
        for w in &mut weights {
            *w *= scale;
        }
    }
    AdaBoostModel {
        trees,
        alphas,
        n_features: features.n_cols(),
        n_classes,
    }
}

pub struct AdaBoostPrimitive;

impl Primitive for AdaBoostPrimitive {
    fn name(&self) -> &'static str {
        "adaboost"
    }

    fn hyper_grid(&self) -> BTreeMap<String, Vec<HyperValue>> {
        BTreeMap::from([
            (
                "n_estimators".to_string(),
                [10, 50, 100].map(HyperValue::Int).to_vec(),
            ),
            (
                "max_depth".to_string(),
                [1, 2, 3].map(HyperValue::Int).to_vec(),
            ),
        ])
    }

    fn fit(&self, hypers: &HyperView<'_>, train: &Dataset, seed_value: u64) -> Box<dyn Model> {
        let params = AdaBoostParams {
            n_estimators: hypers.usize("n_estimators"),
            base_max_depth: hypers.usize("max_depth"),
        };
        Box::new(fit_adaboost(
            &train.features,
            &train.labels,
            train.n_classes,
            &params,
            seed_value,
        ))
    }
}
