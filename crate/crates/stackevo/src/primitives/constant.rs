//! Degenerate predictor for single-class training data.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

use super::{Model, ModelState};

/// Always predicts one fixed class. Produced whenever a fit sees a single
/// distinct label, which keeps tiny cross-validation folds from crashing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantModel {
    pub class: usize,
    pub n_features: usize,
    pub n_classes: usize,
}

impl ConstantModel {
    pub fn new(class: usize, n_features: usize, n_classes: usize) -> Self {
        Self {
            class,
            n_features,
            n_classes,
        }
    }
}

impl Model for ConstantModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_batch(&self, features: &Matrix) -> Vec<usize> {
        vec![self.class; features.n_rows()]
    }

    fn state(&self) -> ModelState {
        ModelState::Constant(self.clone())
    }
}
