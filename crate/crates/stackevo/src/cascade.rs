//! The stacked cascade: layer-by-layer training and prediction.
//!
//! Layer `i` consumes a matrix holding the raw columns plus one synthetic
//! column per node of every earlier layer, so its width is always
//! `raw_width + sum(node counts of layers < i)`. Each layer is fitted on its
//! input matrix, predicts that same matrix in-sample, and those predictions
//! are appended as the next layer's extra features. Raw columns are never
//! dropped or reordered, so later layers always see the original data
//! alongside the synthetic columns; every synthetic column is kept all the
//! way down (there is no cap on the pre-final feature count). Prediction
//! replays the same widening walk and returns the final single node's output.
//!
//! Synthetic columns carry hard class indices cast to reals, one column per
//! node. Probability vectors are not propagated; they would multiply the
//! column count per node and change every downstream width.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ColumnMeta, Dataset};
use crate::genome::{GenomeError, PipelineGenome};
use crate::matrix::Matrix;
use crate::primitives::{self, ModelState, NodeSpec, PrimitiveError, TrainedPrimitive};
use crate::seed;

/// Node counts per layer; the final layer always has exactly one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeShape {
    pub node_counts: Vec<usize>,
}

impl CascadeShape {
    pub fn validate(&self, max_layers: usize, max_nodes: usize) -> Result<(), GenomeError> {
        let n = self.node_counts.len();
        if n == 0 {
            return Err(GenomeError::NoLayers);
        }
        if n > max_layers {
            return Err(GenomeError::TooManyLayers {
                found: n,
                max: max_layers,
            });
        }
        let last = self.node_counts[n - 1];
        if last != 1 {
            return Err(GenomeError::BadFinalLayer { found: last });
        }
        for (layer, &count) in self.node_counts[..n - 1].iter().enumerate() {
            if count == 0 || count > max_nodes {
                return Err(GenomeError::BadLayerWidth {
                    layer,
                    found: count,
                    max: max_nodes,
                });
            }
        }
        Ok(())
    }

    /// Width of the matrix entering `layer`: the raw width plus one column
    /// per node of every earlier layer.
    pub fn width_entering_layer(&self, raw_width: usize, layer: usize) -> usize {
        raw_width + self.node_counts[..layer].iter().sum::<usize>()
    }

    pub fn total_nodes(&self) -> usize {
        self.node_counts.iter().sum()
    }
}

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("prediction vector {index} has {actual} entries, dataset has {expected} rows")]
    PredictionLength {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("layer {layer} node {node}: {source}")]
    Node {
        layer: usize,
        node: usize,
        #[source]
        source: PrimitiveError,
    },
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error("pipeline document schema version {found} is unsupported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("malformed pipeline document: {reason}")]
    MalformedDocument { reason: String },
}

/// A genome plus the fitted state of every node; ready to predict.
pub struct TrainedPipeline {
    pub genome: PipelineGenome,
    /// Fitted nodes, shaped exactly like `genome.layers`.
    pub fitted_nodes: Vec<Vec<TrainedPrimitive>>,
    /// Column count of the original (raw) dataset the pipeline was fit on.
    pub raw_width: usize,
    /// Label decode table carried from the training dataset.
    pub label_names: Vec<String>,
}

/// Appends one synthetic column per prediction vector to `d`, tagging each
/// as `Synthetic { layer_index, node }` in order. Class indices are cast to
/// reals; original columns are untouched.
pub fn augment(
    d: &Dataset,
    predictions: &[Vec<usize>],
    layer_index: usize,
) -> Result<Dataset, CascadeError> {
    let features = augment_features(&d.features, predictions)?;
    let mut column_meta = d.column_meta.clone();
    for node in 0..predictions.len() {
        column_meta.push(ColumnMeta::Synthetic {
            layer: layer_index,
            node,
        });
    }
    Ok(Dataset {
        features,
        labels: d.labels.clone(),
        n_classes: d.n_classes,
        column_meta,
        label_names: d.label_names.clone(),
    })
}

/// Matrix-level augmentation for the prediction path.
pub fn augment_features(
    features: &Matrix,
    predictions: &[Vec<usize>],
) -> Result<Matrix, CascadeError> {
    for (index, preds) in predictions.iter().enumerate() {
        if preds.len() != features.n_rows() {
            return Err(CascadeError::PredictionLength {
                index,
                expected: features.n_rows(),
                actual: preds.len(),
            });
        }
    }
    if predictions.is_empty() {
        return Ok(features.clone());
    }
    let columns: Vec<Vec<f64>> = predictions
        .iter()
        .map(|preds| preds.iter().map(|&c| c as f64).collect())
        .collect();
    Ok(features.with_appended_columns(&columns))
}

/// Fits a pipeline layer by layer and returns it along with the final
/// layer's in-sample training predictions.
///
/// Within a layer every node is fitted independently on the same input
/// matrix; node seeds derive from `(seed, layer, node)`, so results are
/// identical however fits are scheduled.
pub fn fit_pipeline_traced(
    genome: &PipelineGenome,
    train: &Dataset,
    seed_value: u64,
) -> Result<(TrainedPipeline, Vec<usize>), CascadeError> {
    // Guard the structural invariant here too: callers outside the search
    // loop can hand-build genomes, and a multi-node final layer would
    // otherwise silently predict from its last node only.
    match genome.layers.last() {
        None => return Err(CascadeError::Genome(GenomeError::NoLayers)),
        Some(last) if last.len() != 1 => {
            return Err(CascadeError::Genome(GenomeError::BadFinalLayer { found: last.len() }))
        }
        Some(_) => {}
    }
    let raw_width = train.n_cols();
    let mut current = train.clone();
    let mut fitted_nodes: Vec<Vec<TrainedPrimitive>> = Vec::with_capacity(genome.layers.len());
    let mut final_predictions: Vec<usize> = Vec::new();

    for (layer_index, layer) in genome.layers.iter().enumerate() {
        let mut fitted_layer = Vec::with_capacity(layer.len());
        let mut predictions: Vec<Vec<usize>> = Vec::with_capacity(layer.len());
        for (node_index, spec) in layer.iter().enumerate() {
            let node_seed =
                seed::derive(seed_value, "node", &[layer_index as u64, node_index as u64]);
            let trained = primitives::fit(spec, &current, node_seed).map_err(|source| {
                CascadeError::Node {
                    layer: layer_index,
                    node: node_index,
                    source,
                }
            })?;
            let preds =
                trained
                    .predict(&current.features)
                    .map_err(|source| CascadeError::Node {
                        layer: layer_index,
                        node: node_index,
                        source,
                    })?;
            fitted_layer.push(trained);
            predictions.push(preds);
        }
        let is_last = layer_index + 1 == genome.layers.len();
        if is_last {
            final_predictions = predictions.pop().unwrap_or_default();
        } else {
            current = augment(&current, &predictions, layer_index)?;
        }
        fitted_nodes.push(fitted_layer);
    }

    let pipeline = TrainedPipeline {
        genome: genome.clone(),
        fitted_nodes,
        raw_width,
        label_names: train.label_names.clone(),
    };
    Ok((pipeline, final_predictions))
}

/// [`fit_pipeline_traced`] without the in-sample trace.
pub fn fit_pipeline(
    genome: &PipelineGenome,
    train: &Dataset,
    seed_value: u64,
) -> Result<TrainedPipeline, CascadeError> {
    fit_pipeline_traced(genome, train, seed_value).map(|(pipeline, _)| pipeline)
}

impl TrainedPipeline {
    /// Replays the cascade on a raw-width feature matrix and returns the
    /// final node's predictions.
    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>, CascadeError> {
        if features.n_cols() != self.raw_width {
            return Err(CascadeError::Node {
                layer: 0,
                node: 0,
                source: PrimitiveError::WidthMismatch {
                    expected: self.raw_width,
                    actual: features.n_cols(),
                },
            });
        }
        let mut current = features.clone();
        for (layer_index, layer) in self.fitted_nodes.iter().enumerate() {
            let mut predictions: Vec<Vec<usize>> = Vec::with_capacity(layer.len());
            for (node_index, node) in layer.iter().enumerate() {
                let preds = node
                    .predict(&current)
                    .map_err(|source| CascadeError::Node {
                        layer: layer_index,
                        node: node_index,
                        source,
                    })?;
                predictions.push(preds);
            }
            if layer_index + 1 == self.fitted_nodes.len() {
                return Ok(predictions.pop().unwrap_or_default());
            }
            current = augment_features(&current, &predictions)?;
        }
        unreachable!("a valid pipeline has at least one layer")
    }

    /// Decodes predicted class indices to the original label strings.
    pub fn decode_labels(&self, predictions: &[usize]) -> Vec<String> {
        predictions
            .iter()
            .map(|&c| {
                self.label_names
                    .get(c)
                    .cloned()
                    .unwrap_or_else(|| c.to_string())
            })
            .collect()
    }

    pub fn to_document(&self) -> PipelineDocument {
        PipelineDocument {
            schema_version: SCHEMA_VERSION,
            genome: self.genome.clone(),
            raw_width: self.raw_width,
            label_names: self.label_names.clone(),
            nodes: self
                .fitted_nodes
                .iter()
                .map(|layer| layer.iter().map(TrainedPrimitive::state).collect())
                .collect(),
        }
    }

    /// Rebuilds a pipeline from its serialized document, re-validating the
    /// genome against the catalog and the width law along the way.
    pub fn from_document(doc: PipelineDocument) -> Result<Self, CascadeError> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(CascadeError::SchemaVersion {
                found: doc.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        let shape = doc.genome.shape();
        if shape.node_counts.is_empty() || *shape.node_counts.last().unwrap() != 1 {
            return Err(CascadeError::MalformedDocument {
                reason: "genome must end in a single-node layer".into(),
            });
        }
        if doc.nodes.len() != doc.genome.layers.len() {
            return Err(CascadeError::MalformedDocument {
                reason: format!(
                    "genome has {} layers but document has {} state layers",
                    doc.genome.layers.len(),
                    doc.nodes.len()
                ),
            });
        }
        let mut fitted_nodes = Vec::with_capacity(doc.nodes.len());
        for (layer_index, (specs, states)) in doc.genome.layers.iter().zip(doc.nodes).enumerate() {
            if specs.len() != states.len() {
                return Err(CascadeError::MalformedDocument {
                    reason: format!(
                        "layer {layer_index} has {} specs but {} states",
                        specs.len(),
                        states.len()
                    ),
                });
            }
            let expected_width = shape.width_entering_layer(doc.raw_width, layer_index);
            let mut layer = Vec::with_capacity(specs.len());
            for (node_index, (spec, state)) in specs.iter().zip(states).enumerate() {
                let trained =
                    TrainedPrimitive::from_state(spec.clone(), state).map_err(|source| {
                        CascadeError::Node {
                            layer: layer_index,
                            node: node_index,
                            source,
                        }
                    })?;
                if trained.n_features() != expected_width {
                    return Err(CascadeError::MalformedDocument {
                        reason: format!(
                            "layer {layer_index} node {node_index} was fitted on \
                             {} columns, expected {expected_width}",
                            trained.n_features()
                        ),
                    });
                }
                layer.push(trained);
            }
            fitted_nodes.push(layer);
        }
        Ok(Self {
            genome: doc.genome,
            fitted_nodes,
            raw_width: doc.raw_width,
            label_names: doc.label_names,
        })
    }
}

pub const SCHEMA_VERSION: u32 = 1;

/// On-disk form of a trained pipeline: the genome fragment, the label
/// encoding table, and each node's fitted state.
#[derive(Serialize, Deserialize)]
pub struct PipelineDocument {
    pub schema_version: u32,
    pub genome: PipelineGenome,
    pub raw_width: usize,
    pub label_names: Vec<String>,
    pub nodes: Vec<Vec<ModelState>>,
}

/// Convenience used by tests and the CLI: a genome holding a single node.
pub fn single_node_genome(spec: NodeSpec, id: u64) -> PipelineGenome {
    PipelineGenome {
        id,
        layers: vec![vec![spec]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{random_genome, GenomeIdGen, SearchBounds};
    use crate::primitives::{fit, node_spec, HyperValue};
    use crate::synth;
    use proptest::prelude::*;

    fn knn1() -> NodeSpec {
        node_spec(
            "knn",
            &[
                ("k", HyperValue::Int(1)),
                ("weighting", HyperValue::tag("uniform")),
            ],
        )
    }

    fn gnb() -> NodeSpec {
        node_spec(
            "gaussian_nb",
            &[("variance_smoothing", HyperValue::Float(1e-9))],
        )
    }

    fn tree3() -> NodeSpec {
        node_spec(
            "decision_tree",
            &[
                ("max_depth", HyperValue::Int(3)),
                ("min_samples_leaf", HyperValue::Int(1)),
                ("criterion", HyperValue::tag("gini")),
            ],
        )
    }

    #[test]
    fn augment_appends_tagged_columns() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64; 5]).collect();
        let d = Dataset::from_numeric(Matrix::from_rows(&rows), vec![0, 1, 0, 1]).unwrap();
        let preds = vec![vec![0usize, 1, 1, 0], vec![1, 1, 1, 1], vec![0, 0, 0, 0]];
        let out = augment(&d, &preds, 2).unwrap();
        assert_eq!(out.n_cols(), 8);
        assert_eq!(out.raw_width(), 5);
        assert_eq!(
            out.column_meta[5],
            ColumnMeta::Synthetic { layer: 2, node: 0 }
        );
        assert_eq!(
            out.column_meta[7],
            ColumnMeta::Synthetic { layer: 2, node: 2 }
        );
        assert_eq!(out.features.column(5), vec![0.0, 1.0, 1.0, 0.0]);
        // Original columns untouched.
        for c in 0..5 {
            assert_eq!(out.features.column(c), d.features.column(c));
        }
    }

    #[test]
    fn augment_with_no_predictions_is_identity() {
        let d = synth::xor_grid(2);
        let out = augment(&d, &[], 0).unwrap();
        assert_eq!(out, d);
    }

    #[test]
    fn augment_rejects_length_mismatch() {
        let d = synth::xor_grid(2);
        let err = augment(&d, &[vec![0; 3]], 0).unwrap_err();
        assert!(matches!(err, CascadeError::PredictionLength { .. }));
    }

    /// Independent column-counting oracle: replays the cascade rule counting
    /// columns only, never touching the fitting path.
    fn oracle_widths(raw_width: usize, node_counts: &[usize]) -> Vec<usize> {
        let mut widths = Vec::with_capacity(node_counts.len());
        let mut width = raw_width;
        for &count in node_counts {
            widths.push(width);
            width += count;
        }
        widths
    }

    #[test]
    fn chained_augment_matches_column_oracle() {
        // Shape [3, 2, 1] on a 10-column input must present widths 10, 13, 15.
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64; 10]).collect();
        let d = Dataset::from_numeric(Matrix::from_rows(&rows), vec![0, 1, 0, 1, 0, 1]).unwrap();
        let node_counts = [3usize, 2, 1];
        let expected = oracle_widths(10, &node_counts);
        assert_eq!(expected, vec![10, 13, 15]);

        let original = d.features.clone();
        let mut current = d;
        let mut seen = Vec::new();
        for (layer, &count) in node_counts.iter().enumerate() {
            seen.push(current.n_cols());
            let preds = vec![vec![0usize; current.n_rows()]; count];
            current = augment(&current, &preds, layer).unwrap();
            // Raw columns persist exactly through every stage.
            for c in 0..10 {
                assert_eq!(current.features.column(c), original.column(c));
            }
        }
        assert_eq!(seen, expected);
        assert_eq!(current.raw_width(), 10);
    }

    #[test]
    fn single_node_pipeline_equals_bare_primitive() {
        let d = synth::separable_blobs(25, 14);
        let genome = single_node_genome(gnb(), 0);
        let (pipeline, trace) = fit_pipeline_traced(&genome, &d, 7).unwrap();
        // The node seed inside a pipeline is derived from (7, layer 0, node 0).
        let node_seed = seed::derive(7, "node", &[0, 0]);
        let bare = fit(&gnb(), &d, node_seed).unwrap();
        let probe = synth::separable_blobs(10, 15).features;
        assert_eq!(
            pipeline.predict(&probe).unwrap(),
            bare.predict(&probe).unwrap()
        );
        assert_eq!(trace, bare.predict(&d.features).unwrap());
    }

    #[test]
    fn two_layer_widths_follow_the_law() {
        let d = synth::separable_blobs(20, 3);
        let genome = PipelineGenome {
            id: 0,
            layers: vec![vec![gnb(), knn1()], vec![tree3()]],
        };
        let (pipeline, _) = fit_pipeline_traced(&genome, &d, 1).unwrap();
        assert_eq!(pipeline.fitted_nodes[0][0].n_features(), 2);
        assert_eq!(pipeline.fitted_nodes[0][1].n_features(), 2);
        // Final node sees raw_width + 2 synthetic columns.
        assert_eq!(pipeline.fitted_nodes[1][0].n_features(), 4);
    }

    #[test]
    fn fit_is_deterministic() {
        let d = synth::separable_blobs(20, 4);
        let bounds = SearchBounds::default();
        let mut ids = GenomeIdGen::new();
        let genome = random_genome(&bounds, 123, &mut ids);
        let probe = synth::separable_blobs(8, 5).features;
        let a = fit_pipeline(&genome, &d, 9)
            .unwrap()
            .predict(&probe)
            .unwrap();
        let b = fit_pipeline(&genome, &d, 9)
            .unwrap()
            .predict(&probe)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hand_replayed_cascade_matches_pipeline_predict() {
        // Oracle: apply each trained node manually, append hard labels as
        // columns by hand, and compare with the pipeline's own predict.
        let d = synth::gaussian_blobs(20, &[(-3.0, 0.0), (3.0, 0.0)], 0.5, 8);
        let genome = PipelineGenome {
            id: 0,
            layers: vec![vec![gnb(), tree3()], vec![knn1()]],
        };
        let (pipeline, _) = fit_pipeline_traced(&genome, &d, 5).unwrap();

        let probe = synth::gaussian_blobs(4, &[(-3.0, 0.0), (3.0, 0.0)], 0.7, 9).features;
        let expect = pipeline.predict(&probe).unwrap();

        // Manual replay.
        let l0n0 = pipeline.fitted_nodes[0][0].predict(&probe).unwrap();
        let l0n1 = pipeline.fitted_nodes[0][1].predict(&probe).unwrap();
        let widened = probe.with_appended_columns(&[
            l0n0.iter().map(|&c| c as f64).collect(),
            l0n1.iter().map(|&c| c as f64).collect(),
        ]);
        let manual = pipeline.fitted_nodes[1][0].predict(&widened).unwrap();
        assert_eq!(manual, expect);
    }

    #[test]
    fn constant_final_node_dominates() {
        // Fit the final node on a single-class dataset via a crafted
        // pipeline: every row of the training set shares one label, so the
        // final node degenerates to a constant and the output ignores the
        // earlier layer entirely.
        let features = Matrix::from_rows(&(0..12).map(|i| vec![i as f64, 1.0]).collect::<Vec<_>>());
        let d = Dataset {
            features,
            labels: vec![1; 12],
            n_classes: 2,
            column_meta: vec![ColumnMeta::Raw; 2],
            label_names: vec!["a".into(), "b".into()],
        };
        let genome = PipelineGenome {
            id: 0,
            layers: vec![vec![knn1()], vec![tree3()]],
        };
        let pipeline = fit_pipeline(&genome, &d, 0).unwrap();
        let probe = Matrix::from_rows(&[vec![100.0, -5.0], vec![-7.0, 2.0]]);
        assert_eq!(pipeline.predict(&probe).unwrap(), vec![1, 1]);
    }

    #[test]
    fn fit_then_predict_reproduces_training_trace() {
        let d = synth::gaussian_blobs(15, &[(-2.0, 1.0), (2.0, -1.0), (0.0, 4.0)], 0.9, 2);
        let genome = PipelineGenome {
            id: 0,
            layers: vec![vec![tree3(), gnb(), knn1()], vec![gnb()], vec![tree3()]],
        };
        let (pipeline, trace) = fit_pipeline_traced(&genome, &d, 77).unwrap();
        assert_eq!(pipeline.predict(&d.features).unwrap(), trace);
    }

    #[test]
    fn document_round_trip_preserves_predictions() {
        let d = synth::separable_blobs(20, 6);
        let genome = PipelineGenome {
            id: 3,
            layers: vec![vec![tree3(), gnb()], vec![knn1()]],
        };
        let pipeline = fit_pipeline(&genome, &d, 13).unwrap();
        let json = serde_json::to_string(&pipeline.to_document()).unwrap();
        let restored =
            TrainedPipeline::from_document(serde_json::from_str(&json).unwrap()).unwrap();
        let probe = synth::separable_blobs(9, 7).features;
        assert_eq!(
            pipeline.predict(&probe).unwrap(),
            restored.predict(&probe).unwrap()
        );
        assert_eq!(restored.label_names, pipeline.label_names);
    }

    #[test]
    fn malformed_genomes_are_rejected_by_fit() {
        let d = synth::separable_blobs(10, 6);
        let empty = PipelineGenome {
            id: 0,
            layers: vec![],
        };
        assert!(matches!(
            fit_pipeline(&empty, &d, 0),
            Err(CascadeError::Genome(GenomeError::NoLayers))
        ));
        let wide_final = PipelineGenome {
            id: 0,
            layers: vec![vec![gnb(), knn1()]],
        };
        assert!(matches!(
            fit_pipeline(&wide_final, &d, 0),
            Err(CascadeError::Genome(GenomeError::BadFinalLayer { found: 2 }))
        ));
    }

    #[test]
    fn unsupported_schema_version_is_rejected() {
        let d = synth::separable_blobs(10, 6);
        let pipeline = fit_pipeline(&single_node_genome(gnb(), 0), &d, 0).unwrap();
        let mut doc = pipeline.to_document();
        doc.schema_version = 99;
        assert!(matches!(
            TrainedPipeline::from_document(doc),
            Err(CascadeError::SchemaVersion { found: 99, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Width law and raw-column persistence over random shapes.
        #[test]
        fn width_law_holds_for_random_genomes(seed_value in 0u64..100_000) {
            let bounds = SearchBounds::default();
            let mut ids = GenomeIdGen::new();
            let genome = random_genome(&bounds, seed_value, &mut ids);
            let d = synth::separable_blobs(12, 1);
            let (pipeline, _) = fit_pipeline_traced(&genome, &d, seed_value).unwrap();
            let shape = genome.shape();
            for (layer_index, layer) in pipeline.fitted_nodes.iter().enumerate() {
                let expected = shape.width_entering_layer(d.n_cols(), layer_index);
                for node in layer {
                    prop_assert_eq!(node.n_features(), expected);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Serialization totality: whatever mix of primitives a random
        /// genome contains, its fitted document reloads to an equivalent
        /// predictor.
        #[test]
        fn document_round_trip_over_random_genomes(seed_value in 0u64..100_000) {
            let bounds = SearchBounds::default();
            let mut ids = GenomeIdGen::new();
            let genome = random_genome(&bounds, seed_value, &mut ids);
            let d = synth::separable_blobs(12, 2);
            let pipeline = fit_pipeline(&genome, &d, seed_value).unwrap();
            let json = serde_json::to_string(&pipeline.to_document()).unwrap();
            let restored =
                TrainedPipeline::from_document(serde_json::from_str(&json).unwrap()).unwrap();
            let probe = synth::separable_blobs(6, 3).features;
            prop_assert_eq!(
                pipeline.predict(&probe).unwrap(),
                restored.predict(&probe).unwrap()
            );
        }
    }
}
