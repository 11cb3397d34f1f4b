//! Evolutionary search over cascading stacked-classifier pipelines.
//!
//! A pipeline is a layered arrangement of classifier primitives. The first
//! layer consumes the raw feature matrix; every later layer consumes the raw
//! features plus one synthetic column per node of the previous layer (that
//! node's predictions). The final layer is a single node whose output is the
//! pipeline's prediction.
//!
//! The search space covers the primitive type of every node, each node's
//! hyperparameters, the number of layers, and the number of nodes per layer.
//! A basic evolutionary loop (random init, one-step mutation on half the
//! population, layer-splice crossover on the other half, cross-validated
//! fitness, elitist top-N selection) explores that space and emits the ten
//! highest-scoring pipelines, refit on the full training set.
//!
//! Modules map onto the moving parts:
//!
//! - [`dataset`]: CSV loading, label encoding, seeded shuffling and splits
//! - [`primitives`]: the classifier catalog behind a uniform fit/predict trait
//! - [`cascade`]: layer-by-layer training/prediction and feature augmentation
//! - [`genome`]: the evolvable pipeline encoding and its variation operators
//! - [`metrics`]: balanced accuracy and k-fold cross-validation fitness
//! - [`evolution`]: the generational search driver
//! - [`cli`]: the `search` / `predict` / `info` command-line surface
//!
//! Every random decision derives from a single master seed via [`seed`], so a
//! run is reproducible bit-for-bit regardless of worker count.
//!
//! # Example
//!
//! ```
//! use stackevo::dataset::{self, SplitSpec};
//! use stackevo::evolution::{self, EAConfig};
//! use stackevo::genome::SearchBounds;
//! use stackevo::synth;
//!
//! let data = synth::separable_blobs(30, 1);
//! let split = SplitSpec { train_fraction: 0.8, seed: 7 };
//! let (train, test) = dataset::shuffle_split(&data, &split).unwrap();
//!
//! let config = EAConfig {
//!     population_n: 6,
//!     iterations_m: 1,
//!     bounds: SearchBounds::with_full_catalog(3, 2).unwrap(),
//!     cv_folds: 3,
//!     master_seed: 7,
//!     worker_count: 2,
//! };
//! let ranked = evolution::run(&config, &train, |_report| {}).unwrap();
//!
//! let (best, record) = &ranked[0];
//! let predictions = best.predict(&test.features).unwrap();
//! assert_eq!(predictions.len(), test.n_rows());
//! assert!(record.cv_score > 0.5);
//! ```

pub mod cascade;
pub mod cli;
pub mod dataset;
pub mod evolution;
pub mod genome;
pub mod matrix;
pub mod metrics;
pub mod primitives;
pub mod seed;
pub mod synth;
