//! Naive Bayes: Gaussian for real-valued features, Bernoulli over binarized
//! features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::matrix::Matrix;

use super::{HyperValue, HyperView, Model, ModelState, Primitive};

/// Per-class feature means/variances with a variance-smoothing floor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianNbModel {
    /// `ln(count_c / n)`, or `-inf` for classes absent at fit time.
    log_priors: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl Model for GaussianNbModel {
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
                let mut best_score = f64::NEG_INFINITY;
                for c in 0..self.n_classes {
                    if self.log_priors[c] == f64::NEG_INFINITY {
                        continue;
                    }
                    let mut score = self.log_priors[c];
                    for (j, &x) in row.iter().enumerate() {
                        let var = self.variances[c][j];
                        let diff = x - self.means[c][j];
                        score -= 0.5 * ((std::f64::consts::TAU * var).ln() + diff * diff / var);
                    }
                    if score > best_score {
                        best = c;
                        best_score = score;
                    }
                }
                best
            })
            .collect()
    }

    fn state(&self) -> ModelState {
        ModelState::GaussianNb(self.clone())
    }
}

pub fn fit_gaussian_nb(
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    var_smoothing: f64,
) -> GaussianNbModel {
    let n = features.n_rows();
    let d = features.n_cols();
    let mut counts = vec![0usize; n_classes];
    let mut sums = vec![vec![0.0; d]; n_classes];
    for (row, &label) in features.rows().zip(labels) {
        counts[label] += 1;
        for (s, &x) in sums[label].iter_mut().zip(row) {
            *s += x;
        }
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| {
            s.iter()
                .map(|v| if c > 0 { v / c as f64 } else { 0.0 })
                .collect()
        })
        .collect();

    let mut variances = vec![vec![0.0; d]; n_classes];
    for (row, &label) in features.rows().zip(labels) {
        for (j, &x) in row.iter().enumerate() {
            let diff = x - means[label][j];
            variances[label][j] += diff * diff;
        }
    }
    for (v, &c) in variances.iter_mut().zip(&counts) {
        for vj in v {
            *vj = if c > 0 { *vj / c as f64 } else { 0.0 };
        }
    }

    // Smoothing scales with the largest overall feature variance; an
    // absolute floor covers all-constant features.
    let mut grand_var: f64 = 0.0;
    for j in 0..d {
        let col = features.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        grand_var = grand_var.max(var);
    }
    let epsilon = if grand_var > 0.0 {
        var_smoothing * grand_var
    } else {
        var_smoothing
    };
    for v in &mut variances {
        for vj in v {
            *vj += epsilon;
        }
    }

    let log_priors = counts
        .iter()
        .map(|&c| {
            if c > 0 {
                (c as f64 / n as f64).ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    GaussianNbModel {
        log_priors,
        means,
        variances,
        n_features: d,
        n_classes,
    }
}

/// Bernoulli NB over thresholded features with Laplace smoothing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BernoulliNbModel {
    log_priors: Vec<f64>,
    /// `ln P(x_j = 1 | c)` per class, per feature.
    log_prob_one: Vec<Vec<f64>>,
    /// `ln P(x_j = 0 | c)` per class, per feature.
    log_prob_zero: Vec<Vec<f64>>,
    binarize: f64,
    pub n_features: usize,
    pub n_classes: usize,
}

impl Model for BernoulliNbModel {
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
                let mut best_score = f64::NEG_INFINITY;
                for c in 0..self.n_classes {
                    if self.log_priors[c] == f64::NEG_INFINITY {
                        continue;
                    }
                    let mut score = self.log_priors[c];
                    for (j, &x) in row.iter().enumerate() {
                        score += if x > self.binarize {
                            self.log_prob_one[c][j]
                        } else {
                            self.log_prob_zero[c][j]
                        };
                    }
                    if score > best_score {
                        best = c;
                        best_score = score;
                    }
                }
                best
            })
            .collect()
    }

    fn state(&self) -> ModelState {
        ModelState::BernoulliNb(self.clone())
    }
}

pub fn fit_bernoulli_nb(
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    alpha: f64,
    binarize: f64,
) -> BernoulliNbModel {
    let n = features.n_rows();
    let d = features.n_cols();
    let mut counts = vec![0usize; n_classes];
    let mut ones = vec![vec![0.0; d]; n_classes];
    for (row, &label) in features.rows().zip(labels) {
        counts[label] += 1;
        for (o, &x) in ones[label].iter_mut().zip(row) {
            if x > binarize {
                *o += 1.0;
            }
        }
    }
    let mut log_prob_one = vec![vec![0.0; d]; n_classes];
    let mut log_prob_zero = vec![vec![0.0; d]; n_classes];
    for c in 0..n_classes {
        let denom = counts[c] as f64 + 2.0 * alpha;
        for j in 0..d {
            let p = (ones[c][j] + alpha) / denom;
            log_prob_one[c][j] = p.ln();
            log_prob_zero[c][j] = (1.0 - p).ln();
        }
    }
    let log_priors = counts
        .iter()
        .map(|&c| {
            if c > 0 {
                (c as f64 / n as f64).ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    BernoulliNbModel {
        log_priors,
        log_prob_one,
        log_prob_zero,
        binarize,
        n_features: d,
        n_classes,
    }
}

pub struct GaussianNbPrimitive;

impl Primitive for GaussianNbPrimitive {
    fn name(&self) -> &'static str {
        "gaussian_nb"
    }

    fn hyper_grid(&self) -> BTreeMap<String, Vec<HyperValue>> {
        BTreeMap::from([(
            "variance_smoothing".to_string(),
            [1e-9, 1e-6].map(HyperValue::Float).to_vec(),
        )])
    }

    fn fit(&self, hypers: &HyperView<'_>, train: &Dataset, _seed: u64) -> Box<dyn Model> {
        Box::new(fit_gaussian_nb(
            &train.features,
            &train.labels,
            train.n_classes,
            hypers.float("variance_smoothing"),
        ))
    }
}

pub struct BernoulliNbPrimitive;

impl Primitive for BernoulliNbPrimitive {
    fn name(&self) -> &'static str {
        "bernoulli_nb"
    }

    fn hyper_grid(&self) -> BTreeMap<String, Vec<HyperValue>> {
        BTreeMap::from([
            (
                "alpha".to_string(),
                [0.1, 1.0].map(HyperValue::Float).to_vec(),
            ),
            (
                "binarize".to_string(),
                [0.0, 0.5].map(HyperValue::Float).to_vec(),
            ),
        ])
    }

    fn fit(&self, hypers: &HyperView<'_>, train: &Dataset, _seed: u64) -> Box<dyn Model> {
        Box::new(fit_bernoulli_nb(
            &train.features,
            &train.labels,
            train.n_classes,
            hypers.float("alpha"),
            hypers.float("binarize"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::balanced_accuracy;
    use crate::synth;

    #[test]
    fn gaussian_nb_separates_blobs() {
        let d = synth::separable_blobs(40, 6);
        let model = fit_gaussian_nb(&d.features, &d.labels, d.n_classes, 1e-9);
        let preds = model.predict_batch(&d.features);
        assert_eq!(balanced_accuracy(&d.labels, &preds, 2).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_nb_survives_constant_features() {
        let features = Matrix::from_rows(&vec![vec![1.0, 3.0]; 6]);
        let labels = vec![0, 0, 0, 1, 1, 1];
        let model = fit_gaussian_nb(&features, &labels, 2, 1e-9);
        let preds = model.predict_batch(&features);
        assert!(preds.iter().all(|&p| p < 2));
    }

    #[test]
    fn bernoulli_nb_separates_sign_patterns() {
        let d = synth::separable_blobs(40, 7);
        let model = fit_bernoulli_nb(&d.features, &d.labels, d.n_classes, 1.0, 0.0);
        let preds = model.predict_batch(&d.features);
        assert!(balanced_accuracy(&d.labels, &preds, 2).unwrap() >= 0.95);
    }
}
