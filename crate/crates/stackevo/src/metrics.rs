//! Balanced accuracy and cross-validated fitness.
//!
//! Fitness of a genome is its mean balanced accuracy over stratified k-fold
//! cross-validation on the training set. The fold partition depends only on
//! `(labels, folds, seed)`, so every genome in a run is scored against the
//! same folds and survivor scores can be cached exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade;
use crate::dataset::Dataset;
use crate::genome::PipelineGenome;
use crate::seed;

/// Cross-validation outcome for one genome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub genome_id: u64,
    /// Mean of `fold_scores`, in [0, 1].
    pub cv_score: f64,
    pub fold_scores: Vec<f64>,
    /// Parsimony tiebreak key: node count of the genome.
    pub total_nodes: usize,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("label vectors are empty")]
    EmptyVectors,
    #[error("label vectors differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("cross-validation needs at least 2 folds, got {folds}")]
    InvalidFolds { folds: usize },
    #[error("cannot cross-validate an empty dataset")]
    EmptyDataset,
}

/// Mean per-class recall over the classes present in `y_true`; classes that
/// never occur there are excluded from the mean.
pub fn balanced_accuracy(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<f64, MetricsError> {
    if y_true.is_empty() {
        return Err(MetricsError::EmptyVectors);
    }
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let mut support = vec![0usize; n_classes];
    let mut correct = vec![0usize; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= n_classes {
            return Err(MetricsError::LabelOutOfRange {
                label: t,
                n_classes,
            });
        }
        if p >= n_classes {
            return Err(MetricsError::LabelOutOfRange {
                label: p,
                n_classes,
            });
        }
        support[t] += 1;
        if t == p {
            correct[t] += 1;
        }
    }
    let mut recall_sum = 0.0;
    let mut present = 0usize;
    for c in 0..n_classes {
        if support[c] > 0 {
            recall_sum += correct[c] as f64 / support[c] as f64;
            present += 1;
        }
    }
    Ok(recall_sum / present as f64)
}

/// Assigns every row to a fold in `[0, folds)`.
///
/// Stratified: each class's rows are shuffled (seeded) and dealt round-robin
/// into consecutive fold slots, so per-class counts differ by at most one
/// across folds and overall fold sizes stay balanced. Depends only on
/// `(labels, folds, seed)`.
pub fn stratified_fold_assignments(labels: &[usize], folds: usize, seed_value: u64) -> Vec<usize> {
    let n_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (row, &label) in labels.iter().enumerate() {
        per_class[label].push(row);
    }
    let mut assignment = vec![0usize; labels.len()];
    let mut slot = 0usize;
    for (class, rows) in per_class.iter_mut().enumerate() {
        let mut rng = seed::rng(seed_value, "fold-class", &[class as u64]);
        for i in (1..rows.len()).rev() {
            let j = rng.random_range(0..=i);
            rows.swap(i, j);
        }
        for &row in rows.iter() {
            assignment[row] = slot % folds;
            slot += 1;
        }
    }
    assignment
}

/// Scores a genome by stratified k-fold cross-validation.
///
/// Per fold: fit the pipeline on the other folds, predict the held-out fold,
/// and score balanced accuracy. A fold whose fit fails scores 0 (with a
/// warning) rather than aborting — the search routes around broken
/// candidates. Folds left empty by tiny datasets are skipped. Deterministic
/// in `(genome, train, folds, seed)`.
pub fn cross_validate(
    genome: &PipelineGenome,
    train: &Dataset,
    folds: usize,
    seed_value: u64,
) -> Result<FitnessRecord, MetricsError> {
    if folds < 2 {
        return Err(MetricsError::InvalidFolds { folds });
    }
    if train.n_rows() == 0 {
        return Err(MetricsError::EmptyDataset);
    }
    let assignment = stratified_fold_assignments(&train.labels, folds, seed_value);
    let mut fold_scores = Vec::with_capacity(folds);
    for fold in 0..folds {
        let mut fit_rows = Vec::new();
        let mut val_rows = Vec::new();
        for (row, &assigned) in assignment.iter().enumerate() {
            if assigned == fold {
                val_rows.push(row);
            } else {
                fit_rows.push(row);
            }
        }
        if val_rows.is_empty() || fit_rows.is_empty() {
            continue;
        }
        let fit_part = train.subset(&fit_rows);
        let val_part = train.subset(&val_rows);
        let fit_seed = seed::derive(seed_value, "cv-fit", &[genome.id, fold as u64]);
        let score = match cascade::fit_pipeline(genome, &fit_part, fit_seed) {
            Ok(pipeline) => match pipeline.predict(&val_part.features) {
                Ok(preds) => balanced_accuracy(&val_part.labels, &preds, train.n_classes)?,
                Err(err) => {
                    log::warn!("genome {}: fold {fold} prediction failed: {err}", genome.id);
                    0.0
                }
            },
            Err(err) => {
                log::warn!("genome {}: fold {fold} fit failed: {err}", genome.id);
                0.0
            }
        };
        fold_scores.push(score);
    }
    let cv_score = if fold_scores.is_empty() {
        0.0
    } else {
        fold_scores.iter().sum::<f64>() / fold_scores.len() as f64
    };
    Ok(FitnessRecord {
        genome_id: genome.id,
        cv_score,
        fold_scores,
        total_nodes: genome.total_nodes(),
    })
}
