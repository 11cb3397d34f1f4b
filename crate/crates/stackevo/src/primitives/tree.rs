//! CART-style decision tree, the shared base learner for the ensembles.
//!
//! Splits are axis-aligned thresholds chosen greedily by impurity decrease.
//! Everything is deterministic: candidate features are visited in index
//! order, thresholds in ascending order, and only a strictly better score
//! replaces the incumbent, so ties resolve to the lowest feature index and
//! then the lowest threshold. Zero-gain splits are taken when the node is
//! impure, which lets deep trees fit parity-style targets where no single
//! split shows any gain.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::matrix::Matrix;
use crate::seed;

use super::{argmax_tie_smallest, HyperValue, HyperView, Model, ModelState, Primitive};

/// Split quality measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Entropy,
}

/// How many features each split considers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubset {
    All,
    /// `max(1, floor(sqrt(n_features)))` features drawn per node.
    Sqrt,
}

/// Threshold selection strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitter {
    /// Exhaustive sweep over midpoints between consecutive distinct values.
    Best,
    /// One uniform random threshold per candidate feature (extra-trees).
    Random,
}

#[derive(Clone, Debug)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub criterion: Criterion,
    pub feature_subset: FeatureSubset,
    pub splitter: Splitter,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
            criterion: Criterion::Gini,
            feature_subset: FeatureSubset::All,
            splitter: Splitter::Best,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum TreeNode {
    Leaf {
        class: usize,
    },
    /// Rows with `value <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted decision tree stored as a flat node arena (root at index 0).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeModel {
    nodes: Vec<TreeNode>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl TreeModel {
    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { class } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

impl Model for TreeModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_batch(&self, features: &Matrix) -> Vec<usize> {
        features.rows().map(|r| self.predict_row(r)).collect()
    }

    fn state(&self) -> ModelState {
        ModelState::Tree(self.clone())
    }
}

struct Builder<'a> {
    features: &'a Matrix,
    labels: &'a [usize],
    weights: Option<&'a [f64]>,
    n_classes: usize,
    params: &'a TreeParams,
    nodes: Vec<TreeNode>,
}

/// Fits a tree on the given rows. `weights` are per-row sample weights
/// (boosting); `min_samples_leaf` counts rows, not weight. The generator is
/// consumed only when `feature_subset` or `splitter` are randomized.
pub fn build_tree(
    features: &Matrix,
    labels: &[usize],
    weights: Option<&[f64]>,
    rows: &[usize],
    n_classes: usize,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> TreeModel {
    assert!(!rows.is_empty(), "cannot grow a tree with no rows");
    let mut b = Builder {
        features,
        labels,
        weights,
        n_classes,
        params,
        nodes: Vec::new(),
    };
    b.grow(rows, 0, rng);
    TreeModel {
        nodes: b.nodes,
        n_features: features.n_cols(),
        n_classes,
    }
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl<'a> Builder<'a> {
    fn weight(&self, row: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[row])
    }

    fn class_weights(&self, rows: &[usize]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_classes];
        for &r in rows {
            counts[self.labels[r]] += self.weight(r);
        }
        counts
    }

    fn impurity(&self, counts: &[f64], total: f64) -> f64 {
        if total <= 0.0 {
            return 0.0;
        }
        match self.params.criterion {
            Criterion::Gini => {
                let mut sum_sq = 0.0;
                for &c in counts {
                    let p = c / total;
                    sum_sq += p * p;
                }
                1.0 - sum_sq
            }
            Criterion::Entropy => {
                let mut h = 0.0;
                for &c in counts {
                    if c > 0.0 {
                        let p = c / total;
                        h -= p * p.log2();
                    }
                }
                h
            }
        }
    }

    /// Grows the subtree for `rows`, returning its node index.
    fn grow(&mut self, rows: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.class_weights(rows);
        let positive = counts.iter().filter(|&&c| c > 0.0).count();
        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        let too_small = rows.len() < 2 * self.params.min_samples_leaf;
        if positive <= 1 || depth_reached || too_small {
            return self.push_leaf(&counts);
        }

        let candidates = self.candidate_features(rng);
        let best = match self.params.splitter {
            Splitter::Best => self.best_split_sweep(rows, &candidates),
            Splitter::Random => self.best_split_random(rows, &candidates, rng),
        };
        let Some(best) = best else {
            return self.push_leaf(&counts);
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.features.get(r, best.feature) <= best.threshold);
        debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());

        let index = self.nodes.len();
        self.nodes.push(TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: 0,
            right: 0,
        });
        let left = self.grow(&left_rows, depth + 1, rng);
        let right = self.grow(&right_rows, depth + 1, rng);
        if let TreeNode::Split {
            left: l, right: r, ..
        } = &mut self.nodes[index]
        {
            *l = left;
            *r = right;
        }
        index
    }

    fn push_leaf(&mut self, counts: &[f64]) -> usize {
        let class = argmax_tie_smallest(counts);
        self.nodes.push(TreeNode::Leaf { class });
        self.nodes.len() - 1
    }

    /// Candidate features in ascending index order; `Sqrt` samples without
    /// replacement and re-sorts so the tie-break stays index-ordered.
    fn candidate_features(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let d = self.features.n_cols();
        match self.params.feature_subset {
            FeatureSubset::All => (0..d).collect(),
            FeatureSubset::Sqrt => {
                let k = ((d as f64).sqrt().floor() as usize).clamp(1, d);
                let mut pool: Vec<usize> = (0..d).collect();
                for i in 0..k {
                    let j = rng.random_range(i..d);
                    pool.swap(i, j);
                }
                let mut chosen = pool[..k].to_vec();
                chosen.sort_unstable();
                chosen
            }
        }
    }

    /// Exhaustive sweep: for each candidate feature, sort the node's rows by
    /// value and score the midpoint between each pair of distinct
    /// consecutive values. Lower weighted child impurity wins; only strict
    /// improvement replaces the incumbent.
    fn best_split_sweep(&self, rows: &[usize], candidates: &[usize]) -> Option<BestSplit> {
        let msl = self.params.min_samples_leaf;
        let total_counts = self.class_weights(rows);
        let total_weight: f64 = total_counts.iter().sum();
        let mut best: Option<BestSplit> = None;

        let mut order: Vec<usize> = Vec::with_capacity(rows.len());
        for &feature in candidates {
            order.clear();
            order.extend_from_slice(rows);
            order.sort_by(|&a, &b| {
                self.features
                    .get(a, feature)
                    .total_cmp(&self.features.get(b, feature))
            });

            let mut left_counts = vec![0.0; self.n_classes];
            let mut left_weight = 0.0;
            for i in 0..order.len() - 1 {
                let r = order[i];
                left_counts[self.labels[r]] += self.weight(r);
                left_weight += self.weight(r);
                let v = self.features.get(r, feature);
                let v_next = self.features.get(order[i + 1], feature);
                if v == v_next {
                    continue;
                }
                let n_left = i + 1;
                let n_right = order.len() - n_left;
                if n_left < msl || n_right < msl {
                    continue;
                }
                let right_counts: Vec<f64> = total_counts
                    .iter()
                    .zip(&left_counts)
                    .map(|(t, l)| t - l)
                    .collect();
                let right_weight = total_weight - left_weight;
                let score = left_weight * self.impurity(&left_counts, left_weight)
                    + right_weight * self.impurity(&right_counts, right_weight);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    best = Some(BestSplit {
                        score,
                        feature,
                        threshold: midpoint(v, v_next),
                    });
                }
            }
        }
        best
    }

    /// Extra-trees style: one uniform threshold per candidate feature inside
    /// the node's value range, best resulting score wins.
    fn best_split_random(
        &self,
        rows: &[usize],
        candidates: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Option<BestSplit> {
        let msl = self.params.min_samples_leaf;
        let total_counts = self.class_weights(rows);
        let total_weight: f64 = total_counts.iter().sum();
        let mut best: Option<BestSplit> = None;

        for &feature in candidates {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &r in rows {
                let v = self.features.get(r, feature);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            // Constant feature in this node: a threshold cannot separate.
            if hi <= lo {
                continue;
            }
            let threshold = lo + rng.random::<f64>() * (hi - lo);
            let mut left_counts = vec![0.0; self.n_classes];
            let mut left_weight = 0.0;
            let mut n_left = 0usize;
            for &r in rows {
                if self.features.get(r, feature) <= threshold {
                    left_counts[self.labels[r]] += self.weight(r);
                    left_weight += self.weight(r);
                    n_left += 1;
                }
            }
            let n_right = rows.len() - n_left;
            if n_left < msl.max(1) || n_right < msl.max(1) {
                continue;
            }
            let right_counts: Vec<f64> = total_counts
                .iter()
                .zip(&left_counts)
                .map(|(t, l)| t - l)
                .collect();
            let right_weight = total_weight - left_weight;
            let score = left_weight * self.impurity(&left_counts, left_weight)
                + right_weight * self.impurity(&right_counts, right_weight);
            if best.as_ref().is_none_or(|b| score < b.score) {
                best = Some(BestSplit {
                    score,
                    feature,
                    threshold,
                });
            }
        }
        best
    }
}

/// Midpoint that is guaranteed to sit strictly between two distinct finite
/// values under round-to-nearest.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m > lo {
        m
    } else {
        hi
    }
}

pub struct DecisionTreePrimitive;

impl Primitive for DecisionTreePrimitive {
    fn name(&self) -> &'static str {
        "decision_tree"
    }

    fn hyper_grid(&self) -> BTreeMap<String, Vec<HyperValue>> {
        BTreeMap::from([
            (
                "max_depth".to_string(),
                [1, 2, 3, 5, 8, 12].map(HyperValue::Int).to_vec(),
            ),
            (
                "min_samples_leaf".to_string(),
                [1, 2, 5].map(HyperValue::Int).to_vec(),
            ),
            (
                "criterion".to_string(),
                vec![HyperValue::tag("gini"), HyperValue::tag("entropy")],
            ),
        ])
    }

    fn fit(&self, hypers: &HyperView<'_>, train: &Dataset, seed_value: u64) -> Box<dyn Model> {
        let params = TreeParams {
            max_depth: Some(hypers.usize("max_depth")),
            min_samples_leaf: hypers.usize("min_samples_leaf"),
            criterion: parse_criterion(hypers.tag("criterion")),
            feature_subset: FeatureSubset::All,
            splitter: Splitter::Best,
        };
        let rows: Vec<usize> = (0..train.n_rows()).collect();
        let mut rng = seed::rng(seed_value, "tree", &[]);
        Box::new(build_tree(
            &train.features,
            &train.labels,
            None,
            &rows,
            train.n_classes,
            &params,
            &mut rng,
        ))
    }
}

pub(crate) fn parse_criterion(tag: &str) -> Criterion {
    match tag {
        "gini" => Criterion::Gini,
        "entropy" => Criterion::Entropy,
        other => panic!("validated spec holds unknown criterion {other:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{fit, node_spec};
    use crate::synth;

    fn dt_spec(depth: i64, msl: i64, criterion: &str) -> crate::primitives::NodeSpec {
        node_spec(
            "decision_tree",
            &[
                ("max_depth", HyperValue::Int(depth)),
                ("min_samples_leaf", HyperValue::Int(msl)),
                ("criterion", HyperValue::tag(criterion)),
            ],
        )
    }

    #[test]
    fn xor_is_fit_exactly_at_depth_two() {
        // XOR is representable by a depth-2 tree, so training accuracy must
        // be perfect on all four points.
        let d = synth::xor_grid(1);
        for criterion in ["gini", "entropy"] {
            let trained = fit(&dt_spec(2, 1, criterion), &d, 0).unwrap();
            let preds = trained.predict(&d.features).unwrap();
            assert_eq!(preds, d.labels, "criterion {criterion}");
        }
    }

    #[test]
    fn depth_one_cannot_fit_xor() {
        let d = synth::xor_grid(1);
        let trained = fit(&dt_spec(1, 1, "gini"), &d, 0).unwrap();
        let preds = trained.predict(&d.features).unwrap();
        assert_ne!(preds, d.labels);
    }

    #[test]
    fn parity_needs_zero_gain_splits_and_gets_them() {
        // On complete parity data every single split has zero gain; the
        // builder must still proceed and reach purity at full depth.
        let d = synth::parity_bits(3, 4);
        let trained = fit(&dt_spec(3, 1, "gini"), &d, 0).unwrap();
        let preds = trained.predict(&d.features).unwrap();
        assert_eq!(preds, d.labels);
    }

    #[test]
    fn min_samples_leaf_blocks_tiny_splits() {
        let d = synth::xor_grid(1);
        // 4 rows with min_samples_leaf 5 cannot split at all.
        let trained = fit(&dt_spec(5, 5, "gini"), &d, 0).unwrap();
        let preds = trained.predict(&d.features).unwrap();
        assert_eq!(preds, vec![preds[0]; 4], "must degenerate to a single leaf");
    }

    #[test]
    fn max_depth_bounds_tree_height() {
        let d = synth::parity_bits(4, 2);
        let rows: Vec<usize> = (0..d.n_rows()).collect();
        let params = TreeParams {
            max_depth: Some(2),
            ..TreeParams::default()
        };
        let mut rng = seed::rng(0, "t", &[]);
        let model = build_tree(
            &d.features,
            &d.labels,
            None,
            &rows,
            d.n_classes,
            &params,
            &mut rng,
        );
        assert!(model.depth() <= 2);
    }

    #[test]
    fn split_tiebreak_prefers_lowest_feature() {
        // Two identical columns: the split must use column 0.
        let features = Matrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
        ]);
        let labels = vec![0, 0, 1, 1];
        let rows = vec![0, 1, 2, 3];
        let mut rng = seed::rng(0, "t", &[]);
        let model = build_tree(
            &features,
            &labels,
            None,
            &rows,
            2,
            &TreeParams::default(),
            &mut rng,
        );
        match &model.nodes[0] {
            TreeNode::Split { feature, .. } => assert_eq!(*feature, 0),
            TreeNode::Leaf { .. } => panic!("expected a split at the root"),
        }
    }
}
