//! Linear classifiers: logistic regression and the perceptron, both
//! one-vs-rest for multi-class.
//!
//! Each class gets its own weight vector (bias folded in as a trailing
//! component); prediction takes the argmax margin with ties to the smallest
//! class index.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::matrix::Matrix;
use crate::seed;

use super::{HyperValue, HyperView, Model, ModelState, Primitive};

/// One weight vector per class, bias as the last component.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearModel {
    weights: Vec<Vec<f64>>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl LinearModel {
    fn margin(&self, class: usize, row: &[f64]) -> f64 {
        let w = &self.weights[class];
        let mut z = w[self.n_features];
        for (wi, xi) in w[..self.n_features].iter().zip(row) {
            z += wi * xi;
        }
        z
    }
}

impl Model for LinearModel {
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
                let mut best = 0;
                let mut best_margin = self.margin(0, row);
                for c in 1..self.n_classes {
                    let m = self.margin(c, row);
                    if m > best_margin {
                        best = c;
                        best_margin = m;
                    }
                }
                best
            })
            .collect()
    }

    fn state(&self) -> ModelState {
        ModelState::Linear(self.clone())
    }
}

/// Full-batch gradient descent on L2-regularized logistic loss, one binary
/// problem per class. The step size is `1 / L` with `L` an upper bound on
/// the gradient's Lipschitz constant, so descent is monotone and needs no
/// tuning or feature scaling.
pub fn fit_logistic(
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    l2_penalty: f64,
    max_iters: usize,
) -> LinearModel {
    let n = features.n_rows();
    let d = features.n_cols();
    // (1/4n) * sum of squared augmented-row norms bounds the loss curvature;
    // the penalty adds 2*lambda.
    let sum_sq: f64 = features
        .rows()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>() + 1.0)
        .sum();
    let lipschitz = sum_sq / (4.0 * n as f64) + 2.0 * l2_penalty;
    let step = 1.0 / lipschitz;

    let mut weights = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let mut w = vec![0.0; d + 1];
        let mut grad = vec![0.0; d + 1];
        for _ in 0..max_iters {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (row, &label) in features.rows().zip(labels) {
                let y = f64::from(label == class);
                let mut z = w[d];
                for (wi, xi) in w[..d].iter().zip(row) {
                    z += wi * xi;
                }
                let residual = sigmoid(z) - y;
                for (g, xi) in grad[..d].iter_mut().zip(row) {
                    *g += residual * xi;
                }
                grad[d] += residual;
            }
            let inv_n = 1.0 / n as f64;
            for (i, g) in grad.iter_mut().enumerate() {
                *g *= inv_n;
                if i < d {
                    // Bias is not penalized.
                    *g += 2.0 * l2_penalty * w[i];
                }
            }
            for (wi, g) in w.iter_mut().zip(&grad) {
                *wi -= step * g;
            }
        }
        weights.push(w);
    }
    LinearModel {
        weights,
        n_features: d,
        n_classes,
    }
}

/// Classic perceptron updates over seeded-shuffled passes, one binary
/// problem per class with targets in {-1, +1}.
pub fn fit_perceptron(
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    epochs: usize,
    learning_rate: f64,
    seed_value: u64,
) -> LinearModel {
    let n = features.n_rows();
    let d = features.n_cols();
    let mut weights = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let mut rng = seed::rng(seed_value, "perceptron-class", &[class as u64]);
        let mut w = vec![0.0; d + 1];
        let mut order: Vec<usize> = (0..n).collect();
        for _ in 0..epochs {
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            for &r in &order {
                let row = features.row(r);
                let y = if labels[r] == class { 1.0 } else { -1.0 };
                let mut z = w[d];
                for (wi, xi) in w[..d].iter().zip(row) {
                    z += wi * xi;
                }
                if y * z <= 0.0 {
                    for (wi, xi) in w[..d].iter_mut().zip(row) {
                        *wi += learning_rate * y * xi;
                    }
                    w[d] += learning_rate * y;
                }
            }
        }
        weights.push(w);
    }
    LinearModel {
        weights,
        n_features: d,
        n_classes,
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub struct LogisticRegressionPrimitive;

impl Primitive for LogisticRegressionPrimitive {
    fn name(&self) -> &'static str {
        "logistic_regression"
    }

    fn hyper_grid(&self) -> BTreeMap<String, Vec<HyperValue>> {
        BTreeMap::from([
            (
                "l2_penalty".to_string(),
                [0.0001, 0.001, 0.01, 0.1].map(HyperValue::Float).to_vec(),
            ),
            (
                "max_iters".to_string(),
                [100, 500].map(HyperValue::Int).to_vec(),
            ),
        ])
    }

    fn fit(&self, hypers: &HyperView<'_>, train: &Dataset, _seed: u64) -> Box<dyn Model> {
        Box::new(fit_logistic(
            &train.features,
            &train.labels,
            train.n_classes,
            hypers.float("l2_penalty"),
            hypers.usize("max_iters"),
        ))
    }
}

pub struct PerceptronPrimitive;

impl Primitive for PerceptronPrimitive {
    fn name(&self) -> &'static str {
        "perceptron"
    }

    fn hyper_grid(&self) -> BTreeMap<String, Vec<HyperValue>> {
        BTreeMap::from([
            ("epochs".to_string(), [10, 50].map(HyperValue::Int).to_vec()),
            (
                "learning_rate".to_string(),
                [0.1, 1.0].map(HyperValue::Float).to_vec(),
            ),
        ])
    }

    fn fit(&self, hypers: &HyperView<'_>, train: &Dataset, seed_value: u64) -> Box<dyn Model> {
        Box::new(fit_perceptron(
            &train.features,
            &train.labels,
            train.n_classes,
            hypers.usize("epochs"),
            hypers.float("learning_rate"),
            seed_value,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::balanced_accuracy;
    use crate::primitives::{fit, node_spec};
    use crate::synth;

    #[test]
    fn logistic_separates_blobs() {
        let d = synth::separable_blobs(40, 1);
        let model = fit_logistic(&d.features, &d.labels, d.n_classes, 0.001, 100);
        let preds = model.predict_batch(&d.features);
        assert_eq!(balanced_accuracy(&d.labels, &preds, 2).unwrap(), 1.0);
    }

    #[test]
    fn perceptron_separates_blobs_and_fails_parity() {
        let blobs = synth::separable_blobs(40, 2);
        let spec = node_spec(
            "perceptron",
            &[
                ("epochs", HyperValue::Int(10)),
                ("learning_rate", HyperValue::Float(1.0)),
            ],
        );
        let trained = fit(&spec, &blobs, 7).unwrap();
        let preds = trained.predict(&blobs.features).unwrap();
        assert!(balanced_accuracy(&blobs.labels, &preds, 2).unwrap() >= 0.95);

        // Parity is not linearly separable; a lone perceptron stays near chance.
        let parity = synth::parity_bits(5, 4);
        let trained = fit(&spec, &parity, 7).unwrap();
        let preds = trained.predict(&parity.features).unwrap();
        let score = balanced_accuracy(&parity.labels, &preds, 2).unwrap();
        assert!(score <= 0.65, "parity score {score}");
    }

    #[test]
    fn multiclass_one_vs_rest_covers_three_blobs() {
        let d = synth::gaussian_blobs(30, &[(-4.0, 0.0), (4.0, 0.0), (0.0, 5.0)], 0.5, 3);
        let model = fit_logistic(&d.features, &d.labels, d.n_classes, 0.0001, 500);
        let preds = model.predict_batch(&d.features);
        assert!(balanced_accuracy(&d.labels, &preds, 3).unwrap() >= 0.95);
    }
}
