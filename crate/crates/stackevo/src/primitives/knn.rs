//! k-nearest neighbors with Euclidean distance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::matrix::Matrix;

use super::{argmax_tie_smallest, HyperValue, HyperView, Model, ModelState, Primitive};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    InverseDistance,
}

/// Stores the training set verbatim; prediction ranks neighbors by
/// `(distance, row index)` so equidistant neighbors resolve
/// deterministically, and class ties go to the smallest index.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KnnModel {
    train: Matrix,
    train_labels: Vec<usize>,
    k: usize,
    weighting: Weighting,
    pub n_classes: usize,
}

impl Model for KnnModel {
    fn n_features(&self) -> usize {
        self.train.n_cols()
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_batch(&self, features: &Matrix) -> Vec<usize> {
        features.rows().map(|row| self.predict_row(row)).collect()
    }

    fn state(&self) -> ModelState {
        ModelState::Knn(self.clone())
    }
}

impl KnnModel {
    fn predict_row(&self, row: &[f64]) -> usize {
        let mut dists: Vec<(f64, usize)> = self
            .train
            .rows()
            .enumerate()
            .map(|(i, t)| (squared_distance(row, t), i))
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = self.k.min(dists.len());
        let neighbors = &dists[..k];

        let mut votes = vec![0.0; self.n_classes];
        match self.weighting {
            Weighting::Uniform => {
                for &(_, i) in neighbors {
                    votes[self.train_labels[i]] += 1.0;
                }
            }
            Weighting::InverseDistance => {
                // Exact matches dominate: if any neighbor is at distance
                // zero, only those vote.
                if neighbors.iter().any(|(d2, _)| *d2 == 0.0) {
                    for &(d2, i) in neighbors {
                        if d2 == 0.0 {
                            votes[self.train_labels[i]] += 1.0;
                        }
                    }
                } else {
                    for &(d2, i) in neighbors {
                        votes[self.train_labels[i]] += 1.0 / d2.sqrt();
                    }
                }
            }
        }
        argmax_tie_smallest(&votes)
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub struct KnnPrimitive;

impl Primitive for KnnPrimitive {
    fn name(&self) -> &'static str {
        "knn"
    }

    fn hyper_grid(&self) -> BTreeMap<String, Vec<HyperValue>> {
        BTreeMap::from([
            (
                "k".to_string(),
                [1, 3, 5, 7, 11].map(HyperValue::Int).to_vec(),
            ),
            (
                "weighting".to_string(),
                vec![
                    HyperValue::tag("uniform"),
                    HyperValue::tag("inverse_distance"),
                ],
            ),
        ])
    }

    fn fit(&self, hypers: &HyperView<'_>, train: &Dataset, _seed: u64) -> Box<dyn Model> {
        let weighting = match hypers.tag("weighting") {
            "uniform" => Weighting::Uniform,
            "inverse_distance" => Weighting::InverseDistance,
            other => panic!("validated spec holds unknown weighting {other:?}"),
        };
        Box::new(KnnModel {
            train: train.features.clone(),
            train_labels: train.labels.clone(),
            k: hypers.usize("k"),
            weighting,
            n_classes: train.n_classes,
        })
    }
}
