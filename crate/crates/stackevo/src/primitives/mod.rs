//! Classifier primitives behind a uniform fit/predict interface.
//!
//! Each primitive is a strategy object implementing [`Primitive`]; the
//! registry holds one instance per algorithm, keyed by name, and the
//! [`catalog`] lists every entry together with its finite hyperparameter
//! grid. Genomes reference primitives purely by name, so the search engine
//! never needs to know which algorithm sits behind a node.
//!
//! All primitives are trained from scratch here: classic ensembles (random
//! forest, extra-trees, bagging, AdaBoost) are treated as atomic primitives
//! just like the single-model ones. Fitting is deterministic given
//! `(spec, data, seed)` — randomized algorithms draw only from a generator
//! seeded with the given seed. Fitting a single-class dataset never fails;
//! it degenerates to a constant predictor.
//!
//! The hyperparameter grids are this crate's own choice of small-but-useful
//! discrete ranges; nothing upstream prescribes them, and `info primitives`
//! exposes them at runtime.

mod adaboost;
mod constant;
mod forest;
mod knn;
mod linear;
mod naive_bayes;
mod tree;

pub use adaboost::{fit_adaboost, AdaBoostModel, AdaBoostParams};
pub use constant::ConstantModel;
pub use forest::{fit_forest, ForestModel, ForestParams};
pub use knn::KnnModel;
pub use linear::LinearModel;
pub use naive_bayes::{BernoulliNbModel, GaussianNbModel};
pub use tree::{build_tree, Criterion, FeatureSubset, Splitter, TreeModel, TreeParams};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::matrix::Matrix;

/// One hyperparameter value: an integer, a real, or an enumerated tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Int(i64),
    Float(f64),
    Tag(String),
}

impl HyperValue {
    pub fn tag(s: &str) -> Self {
        HyperValue::Tag(s.to_string())
    }
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Int(v) => write!(f, "{v}"),
            HyperValue::Float(v) => write!(f, "{v}"),
            HyperValue::Tag(v) => write!(f, "{v}"),
        }
    }
}

/// A catalog entry: primitive name plus its finite hyperparameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveSpec {
    pub name: String,
    pub hyper_grid: BTreeMap<String, Vec<HyperValue>>,
}

/// A concrete node: a primitive name and one chosen value per grid key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub primitive: String,
    pub hypers: BTreeMap<String, HyperValue>,
}

#[derive(Debug, Error)]
pub enum PrimitiveError {
    #[error("unknown primitive {name:?}")]
    UnknownPrimitive { name: String },
    #[error("{primitive}: missing hyperparameter {name:?}")]
    MissingHyper { primitive: String, name: String },
    #[error("{primitive}: unexpected hyperparameter {name:?}")]
    UnknownHyper { primitive: String, name: String },
    #[error("{primitive}: value {value} for {name:?} is not in the grid")]
    HyperNotInGrid {
        primitive: String,
        name: String,
        value: HyperValue,
    },
    #[error("feature width mismatch: fitted on {expected} columns, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },
    #[error("cannot fit on an empty training set")]
    EmptyTrainingSet,
}

/// Serializable fitted state of any primitive, tagged by model kind.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelState {
    Constant(ConstantModel),
    Tree(TreeModel),
    Forest(ForestModel),
    AdaBoost(AdaBoostModel),
    Linear(LinearModel),
    Knn(KnnModel),
    GaussianNb(GaussianNbModel),
    BernoulliNb(BernoulliNbModel),
}

/// A fitted classifier: predicts class indices for feature rows.
pub trait Model: Send + Sync {
    /// Width of the matrix this model was fitted on.
    fn n_features(&self) -> usize;
    /// Size of the label space the model was fitted against.
    fn n_classes(&self) -> usize;
    /// Predicts one class index per row. The caller has already checked the
    /// width; predictions lie in `[0, n_classes)`.
    fn predict_batch(&self, features: &Matrix) -> Vec<usize>;
    /// Snapshot of the fitted state for serialization.
    fn state(&self) -> ModelState;
}

/// Rebuilds a boxed model from its serialized state.
pub fn model_from_state(state: ModelState) -> Box<dyn Model> {
    match state {
        ModelState::Constant(m) => Box::new(m),
        ModelState::Tree(m) => Box::new(m),
        ModelState::Forest(m) => Box::new(m),
        ModelState::AdaBoost(m) => Box::new(m),
        ModelState::Linear(m) => Box::new(m),
        ModelState::Knn(m) => Box::new(m),
        ModelState::GaussianNb(m) => Box::new(m),
        ModelState::BernoulliNb(m) => Box::new(m),
    }
}

/// A classifier algorithm: declares its grid and fits models.
///
/// Implementations are stateless strategy objects; one instance of each is
/// registered at startup and shared for the whole process.
pub trait Primitive: Send + Sync {
    fn name(&self) -> &'static str;
    fn hyper_grid(&self) -> BTreeMap<String, Vec<HyperValue>>;
    /// Fits on a validated spec and non-degenerate data (at least two
    /// distinct classes present; the registry handles the single-class
    /// fallback before dispatching here).
    fn fit(&self, hypers: &HyperView<'_>, train: &Dataset, seed: u64) -> Box<dyn Model>;
}

/// Typed access to validated hyperparameter values.
pub struct HyperView<'a>(&'a BTreeMap<String, HyperValue>);

impl<'a> HyperView<'a> {
    pub fn new(map: &'a BTreeMap<String, HyperValue>) -> Self {
        Self(map)
    }

    pub fn int(&self, key: &str) -> i64 {
        match self.0.get(key) {
            Some(HyperValue::Int(v)) => *v,
            other => panic!("validated spec must hold an int for {key:?}, got {other:?}"),
        }
    }

    pub fn usize(&self, key: &str) -> usize {
        self.int(key) as usize
    }

    pub fn float(&self, key: &str) -> f64 {
        match self.0.get(key) {
            Some(HyperValue::Float(v)) => *v,
            other => panic!("validated spec must hold a float for {key:?}, got {other:?}"),
        }
    }

    pub fn tag(&self, key: &str) -> &str {
        match self.0.get(key) {
            Some(HyperValue::Tag(v)) => v,
            other => panic!("validated spec must hold a tag for {key:?}, got {other:?}"),
        }
    }

    /// Depth grids mix integers with the tag `none` (unbounded).
    pub fn depth(&self, key: &str) -> Option<usize> {
        match self.0.get(key) {
            Some(HyperValue::Int(v)) => Some(*v as usize),
            Some(HyperValue::Tag(t)) if t == "none" => None,
            other => panic!("validated spec must hold a depth for {key:?}, got {other:?}"),
        }
    }
}

static REGISTRY: LazyLock<Vec<Box<dyn Primitive>>> = LazyLock::new(|| {
    vec![
        Box::new(linear::PerceptronPrimitive) as Box<dyn Primitive>,
        Box::new(linear::LogisticRegressionPrimitive),
        Box::new(tree::DecisionTreePrimitive),
        Box::new(knn::KnnPrimitive),
        Box::new(naive_bayes::GaussianNbPrimitive),
        Box::new(naive_bayes::BernoulliNbPrimitive),
        Box::new(forest::RandomForestPrimitive),
        Box::new(forest::ExtraTreesPrimitive),
        Box::new(adaboost::AdaBoostPrimitive),
        Box::new(forest::BaggingPrimitive),
    ]
});

/// All registered primitives, in registration order.
pub fn registry() -> &'static [Box<dyn Primitive>] {
    &REGISTRY
}

/// Looks a primitive up by name.
pub fn lookup(name: &str) -> Option<&'static dyn Primitive> {
    REGISTRY
        .iter()
        .find(|p| p.name() == name)
        .map(|p| p.as_ref())
}

/// The catalog: every registered primitive with its grid, in a fixed order.
pub fn catalog() -> Vec<PrimitiveSpec> {
    REGISTRY
        .iter()
        .map(|p| PrimitiveSpec {
            name: p.name().to_string(),
            hyper_grid: p.hyper_grid(),
        })
        .collect()
}

/// Checks a node spec against the catalog: known primitive, exactly the grid
/// keys, and every value a member of its grid list.
pub fn validate_node_spec(spec: &NodeSpec) -> Result<(), PrimitiveError> {
    let prim = lookup(&spec.primitive).ok_or_else(|| PrimitiveError::UnknownPrimitive {
        name: spec.primitive.clone(),
    })?;
    let grid = prim.hyper_grid();
    for key in spec.hypers.keys() {
        if !grid.contains_key(key) {
            return Err(PrimitiveError::UnknownHyper {
                primitive: spec.primitive.clone(),
                name: key.clone(),
            });
        }
    }
    for (key, allowed) in &grid {
        match spec.hypers.get(key) {
            None => {
                return Err(PrimitiveError::MissingHyper {
                    primitive: spec.primitive.clone(),
                    name: key.clone(),
                })
            }
            Some(value) => {
                if !allowed.contains(value) {
                    return Err(PrimitiveError::HyperNotInGrid {
                        primitive: spec.primitive.clone(),
                        name: key.clone(),
                        value: value.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// A fitted node: the spec it came from plus the opaque fitted state.
pub struct TrainedPrimitive {
    spec: NodeSpec,
    model: Box<dyn Model>,
}

impl TrainedPrimitive {
    pub fn spec(&self) -> &NodeSpec {
        &self.spec
    }

    /// Width of the matrix this node was fitted on.
    pub fn n_features(&self) -> usize {
        self.model.n_features()
    }

    /// Size of the label space seen at fit time.
    pub fn n_classes_seen(&self) -> usize {
        self.model.n_classes()
    }

    /// Predicts a class index per row; the feature width must equal the
    /// width the node was fitted on.
    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>, PrimitiveError> {
        if features.n_cols() != self.model.n_features() {
            return Err(PrimitiveError::WidthMismatch {
                expected: self.model.n_features(),
                actual: features.n_cols(),
            });
        }
        Ok(self.model.predict_batch(features))
    }

    pub fn state(&self) -> ModelState {
        self.model.state()
    }

    /// Rebuilds a trained node from a spec plus serialized state.
    pub fn from_state(spec: NodeSpec, state: ModelState) -> Result<Self, PrimitiveError> {
        validate_node_spec(&spec)?;
        Ok(Self {
            spec,
            model: model_from_state(state),
        })
    }
}

/// Fits a primitive on a training set.
///
/// Deterministic in `(spec, train, seed)`. A training set with a single
/// distinct class yields a constant predictor for that class rather than an
/// error, so degenerate cross-validation folds never abort a run.
pub fn fit(
    spec: &NodeSpec,
    train: &Dataset,
    seed: u64,
) -> Result<TrainedPrimitive, PrimitiveError> {
    validate_node_spec(spec)?;
    if train.n_rows() == 0 {
        return Err(PrimitiveError::EmptyTrainingSet);
    }
    let model: Box<dyn Model> = if train.distinct_label_count() <= 1 {
        Box::new(ConstantModel::new(
            train.labels[0],
            train.n_cols(),
            train.n_classes,
        ))
    } else {
        let prim = lookup(&spec.primitive).expect("validated spec names a registered primitive");
        prim.fit(&HyperView::new(&spec.hypers), train, seed)
    };
    Ok(TrainedPrimitive {
        spec: spec.clone(),
        model,
    })
}

/// Convenience: builds a `NodeSpec` from (key, value) pairs.
pub fn node_spec(primitive: &str, hypers: &[(&str, HyperValue)]) -> NodeSpec {
    NodeSpec {
        primitive: primitive.to_string(),
        hypers: hypers
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
    }
}

/// Majority vote with deterministic ties: highest count wins, ties go to the
/// smallest class index.
pub(crate) fn argmax_tie_smallest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Cartesian product of a hyperparameter grid, in key order. Grids are small
/// by construction, so exhaustive sweeps stay cheap.
pub fn grid_combinations(
    grid: &BTreeMap<String, Vec<HyperValue>>,
) -> Vec<BTreeMap<String, HyperValue>> {
    let mut combos: Vec<BTreeMap<String, HyperValue>> = vec![BTreeMap::new()];
    for (key, values) in grid {
        let mut next = Vec::with_capacity(combos.len() * values.len());
        for combo in &combos {
            for value in values {
                let mut extended = combo.clone();
                extended.insert(key.clone(), value.clone());
                next.push(extended);
            }
        }
        combos = next;
    }
    combos
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn catalog_matches_required_roster() {
        let specs = catalog();
        let names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "perceptron",
                "logistic_regression",
                "decision_tree",
                "knn",
                "gaussian_nb",
                "bernoulli_nb",
                "random_forest",
                "extra_trees",
                "adaboost",
                "bagging",
            ]
        );
        assert!(names.contains(&"random_forest"));
        assert!(names.contains(&"adaboost"));
        assert!(!names.contains(&"svc"));
    }

    #[test]
    fn grids_are_finite_and_nonempty() {
        for spec in catalog() {
            assert!(
                !spec.hyper_grid.is_empty(),
                "{} has an empty grid",
                spec.name
            );
            for (key, values) in &spec.hyper_grid {
                assert!(
                    !values.is_empty(),
                    "{}.{key} has no allowed values",
                    spec.name
                );
            }
        }
    }

    #[test]
    fn spec_validation_catches_bad_values() {
        let good = node_spec(
            "decision_tree",
            &[
                ("max_depth", HyperValue::Int(3)),
                ("min_samples_leaf", HyperValue::Int(1)),
                ("criterion", HyperValue::tag("gini")),
            ],
        );
        validate_node_spec(&good).unwrap();

        let mut bad = good.clone();
        bad.hypers.insert("max_depth".into(), HyperValue::Int(4));
        assert!(matches!(
            validate_node_spec(&bad),
            Err(PrimitiveError::HyperNotInGrid { .. })
        ));

        let mut extra = good.clone();
        extra.hypers.insert("bogus".into(), HyperValue::Int(1));
        assert!(matches!(
            validate_node_spec(&extra),
            Err(PrimitiveError::UnknownHyper { .. })
        ));

        let mut missing = good;
        missing.hypers.remove("criterion");
        assert!(matches!(
            validate_node_spec(&missing),
            Err(PrimitiveError::MissingHyper { .. })
        ));

        assert!(matches!(
            validate_node_spec(&node_spec("svc", &[])),
            Err(PrimitiveError::UnknownPrimitive { .. })
        ));
    }

    /// One representative spec per primitive (first grid value for each key).
    pub(crate) fn first_grid_spec(name: &str) -> NodeSpec {
        let spec = catalog().into_iter().find(|s| s.name == name).unwrap();
        NodeSpec {
            primitive: spec.name,
            hypers: spec
                .hyper_grid
                .into_iter()
                .map(|(k, vs)| (k, vs.into_iter().next().unwrap()))
                .collect(),
        }
    }

    #[test]
    fn single_class_fit_degenerates_to_constant() {
        let d = crate::dataset::Dataset {
            features: crate::matrix::Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]),
            labels: vec![2, 2, 2],
            n_classes: 4,
            column_meta: vec![crate::dataset::ColumnMeta::Raw],
            label_names: vec!["a".into(), "b".into(), "c".into(), "d".into()],
        };
        for spec in catalog() {
            let trained = fit(&first_grid_spec(&spec.name), &d, 1).unwrap();
            let probe = crate::matrix::Matrix::from_rows(&vec![vec![9.0]; 5]);
            assert_eq!(
                trained.predict(&probe).unwrap(),
                vec![2; 5],
                "{}",
                spec.name
            );
        }
    }

    #[test]
    fn width_mismatch_cites_both_widths() {
        let d = synth::separable_blobs(20, 3);
        let trained = fit(&first_grid_spec("gaussian_nb"), &d, 1).unwrap();
        let wide = crate::matrix::Matrix::from_rows(&[vec![0.0; 7]]);
        let err = trained.predict(&wide).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains('2') && msg.contains('7'),
            "message was {msg:?}"
        );
    }

    #[test]
    fn fits_are_deterministic_across_calls() {
        let d = synth::separable_blobs(30, 5);
        let probe = synth::separable_blobs(10, 6).features;
        for spec in catalog() {
            let node = first_grid_spec(&spec.name);
            let a = fit(&node, &d, 77).unwrap().predict(&probe).unwrap();
            let b = fit(&node, &d, 77).unwrap().predict(&probe).unwrap();
            assert_eq!(a, b, "{} is not deterministic", spec.name);
        }
    }

    #[test]
    fn every_primitive_separates_blobs() {
        // Brute-force sanity oracle: well-separated blobs must be easy for
        // every catalog member under every grid setting.
        let d = synth::separable_blobs(100, 12);
        for spec in catalog() {
            for hypers in grid_combinations(&spec.hyper_grid) {
                let node = NodeSpec {
                    primitive: spec.name.clone(),
                    hypers,
                };
                let trained = fit(&node, &d, 5).unwrap();
                let preds = trained.predict(&d.features).unwrap();
                let score =
                    crate::metrics::balanced_accuracy(&d.labels, &preds, d.n_classes).unwrap();
                assert!(
                    score >= 0.9,
                    "{} with {:?} scored {score} on separable blobs",
                    spec.name,
                    trained.spec().hypers
                );
            }
        }
    }
}
