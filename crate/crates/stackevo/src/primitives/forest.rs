//! Tree ensembles: random forest, extra-trees, and bagging.
//!
//! All three share one mechanism — fit `n_estimators` trees on (possibly
//! bootstrapped) row samples and majority-vote the predictions — and differ
//! only in their [`ForestParams`]: random forests bootstrap and may subsample
//! features per split, extra-trees use the whole sample with random
//! thresholds, bagging bootstraps full-feature exhaustive trees.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::matrix::Matrix;
use crate::seed;

use super::tree::{build_tree, Criterion, FeatureSubset, Splitter, TreeModel, TreeParams};
use super::{argmax_tie_smallest, HyperValue, HyperView, Model, ModelState, Primitive};

#[derive(Clone, Debug)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub tree: TreeParams,
    /// Sample rows with replacement per tree; disabled, every tree sees the
    /// full training set.
    pub bootstrap: bool,
}

impl ForestParams {
    fn random_forest(n_estimators: usize, max_depth: Option<usize>, subset: FeatureSubset) -> Self {
        Self {
            n_estimators,
            tree: TreeParams {
                max_depth,
                min_samples_leaf: 1,
                criterion: Criterion::Gini,
                feature_subset: subset,
                splitter: Splitter::Best,
            },
            bootstrap: true,
        }
    }

    fn extra_trees(n_estimators: usize, max_depth: Option<usize>, subset: FeatureSubset) -> Self {
        Self {
            n_estimators,
            tree: TreeParams {
                max_depth,
                min_samples_leaf: 1,
                criterion: Criterion::Gini,
                feature_subset: subset,
                splitter: Splitter::Random,
            },
            bootstrap: false,
        }
    }

    fn bagging(n_estimators: usize, max_depth: Option<usize>) -> Self {
        Self {
            n_estimators,
            tree: TreeParams {
                max_depth,
                min_samples_leaf: 1,
                criterion: Criterion::Gini,
                feature_subset: FeatureSubset::All,
                splitter: Splitter::Best,
            },
            bootstrap: true,
        }
    }
}

/// Majority vote over fitted trees; ties go to the smallest class index.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<TreeModel>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl Model for ForestModel {
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
                let mut votes = vec![0.0; self.n_classes];
                for tree in &self.trees {
                    votes[tree.predict_row(row)] += 1.0;
                }
                argmax_tie_smallest(&votes)
            })
            .collect()
    }

    fn state(&self) -> ModelState {
        ModelState::Forest(self.clone())
    }
}

/// Fits an ensemble of trees. Tree `t` draws its bootstrap sample and split
/// randomness from a generator derived from `(seed, t)`, so the ensemble is
/// reproducible and trees are mutually independent.
pub fn fit_forest(
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    params: &ForestParams,
    seed_value: u64,
) -> ForestModel {
    let n = features.n_rows();
    let trees = (0..params.n_estimators)
        .map(|t| {
            let mut rng = seed::rng(seed_value, "forest-tree", &[t as u64]);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            build_tree(
                features,
                labels,
                None,
                &rows,
                n_classes,
                &params.tree,
                &mut rng,
            )
        })
        .collect();
    ForestModel {
        trees,
        n_features: features.n_cols(),
        n_classes,
    }
}

fn ensemble_grid(with_max_features: bool) -> BTreeMap<String, Vec<HyperValue>> {
    let mut grid = BTreeMap::from([
        (
            "n_estimators".to_string(),
            [10, 30, 100].map(HyperValue::Int).to_vec(),
        ),
        (
            "max_depth".to_string(),
            vec![
                HyperValue::Int(3),
                HyperValue::Int(5),
                HyperValue::Int(8),
                HyperValue::tag("none"),
            ],
        ),
    ]);
    if with_max_features {
        grid.insert(
            "max_features".to_string(),
            vec![HyperValue::tag("sqrt"), HyperValue::tag("all")],
        );
    }
    grid
}

fn parse_subset(tag: &str) -> FeatureSubset {
    match tag {
        "sqrt" => FeatureSubset::Sqrt,
        "all" => FeatureSubset::All,
        other => panic!("validated spec holds unknown max_features {other:?}"),
    }
}

pub struct RandomForestPrimitive;

impl Primitive for RandomForestPrimitive {
    fn name(&self) -> &'static str {
        "random_forest"
    }

    fn hyper_grid(&self) -> BTreeMap<String, Vec<HyperValue>> {
        ensemble_grid(true)
    }

    fn fit(&self, hypers: &HyperView<'_>, train: &Dataset, seed_value: u64) -> Box<dyn Model> {
        let params = ForestParams::random_forest(
            hypers.usize("n_estimators"),
            hypers.depth("max_depth"),
            parse_subset(hypers.tag("max_features")),
        );
        Box::new(fit_forest(
            &train.features,
            &train.labels,
            train.n_classes,
            &params,
            seed_value,
        ))
    }
}

pub struct ExtraTreesPrimitive;

impl Primitive for ExtraTreesPrimitive {
    fn name(&self) -> &'static str {
        "extra_trees"
    }

    fn hyper_grid(&self) -> BTreeMap<String, Vec<HyperValue>> {
        ensemble_grid(true)
    }

    fn fit(&self, hypers: &HyperView<'_>, train: &Dataset, seed_value: u64) -> Box<dyn Model> {
        let params = ForestParams::extra_trees(
            hypers.usize("n_estimators"),
            hypers.depth("max_depth"),
            parse_subset(hypers.tag("max_features")),
        );
        Box::new(fit_forest(
            &train.features,
            &train.labels,
            train.n_classes,
            &params,
            seed_value,
        ))
    }
}

pub struct BaggingPrimitive;

impl Primitive for BaggingPrimitive {
    fn name(&self) -> &'static str {
        "bagging"
    }

    fn hyper_grid(&self) -> BTreeMap<String, Vec<HyperValue>> {
        ensemble_grid(false)
    }

    fn fit(&self, hypers: &HyperView<'_>, train: &Dataset, seed_value: u64) -> Box<dyn Model> {
        let params = ForestParams::bagging(hypers.usize("n_estimators"), hypers.depth("max_depth"));
        Box::new(fit_forest(
            &train.features,
            &train.labels,
            train.n_classes,
            &params,
            seed_value,
        ))
    }
}
