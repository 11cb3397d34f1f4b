//! The evolvable pipeline representation and its variation operators.
//!
//! A genome is the full hyperparameter description of one pipeline: the
//! layer/node topology plus every node's primitive choice and
//! hyperparameter values. Three operators produce genomes: uniform random
//! generation, one-step mutation (exactly one change, drawn uniformly over
//! the applicable concrete moves), and layer-splice crossover. All three are
//! pure functions of their inputs and a seed; fresh ids come from an
//! explicit allocator owned by the caller.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::CascadeShape;
use crate::primitives::{self, HyperValue, NodeSpec};
use crate::seed;

/// Topology and catalog limits for a search run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchBounds {
    /// Maximum layer count, counting the final single-node output layer.
    pub max_layers: usize,
    /// Maximum node count for non-final layers.
    pub max_nodes: usize,
    /// Catalog names the search may use; nonempty.
    pub allowed_primitives: Vec<String>,
}

#[derive(Debug, Error)]
pub enum GenomeError {
    #[error("max_layers and max_nodes must be at least 1")]
    BadBounds,
    #[error("allow-list is empty")]
    EmptyAllowList,
    #[error("allow-list names unknown primitive {name:?}")]
    UnknownAllowedPrimitive { name: String },
    #[error("genome has no layers")]
    NoLayers,
    #[error("final layer must have exactly one node, found {found}")]
    BadFinalLayer { found: usize },
    #[error("layer {layer} has {found} nodes, outside [1, {max}]")]
    BadLayerWidth {
        layer: usize,
        found: usize,
        max: usize,
    },
    #[error("genome has {found} layers, over the bound {max}")]
    TooManyLayers { found: usize, max: usize },
    #[error("layer {layer} node {node}: primitive {name:?} is not in the allow-list")]
    PrimitiveNotAllowed {
        layer: usize,
        node: usize,
        name: String,
    },
    #[error("layer {layer} node {node}: {source}")]
    BadNode {
        layer: usize,
        node: usize,
        #[source]
        source: primitives::PrimitiveError,
    },
    #[error("no mutation move is applicable to this genome under these bounds")]
    NoApplicableMoves,
}

impl SearchBounds {
    pub fn new(
        max_layers: usize,
        max_nodes: usize,
        allowed_primitives: Vec<String>,
    ) -> Result<Self, GenomeError> {
        if max_layers < 1 || max_nodes < 1 {
            return Err(GenomeError::BadBounds);
        }
        if allowed_primitives.is_empty() {
            return Err(GenomeError::EmptyAllowList);
        }
        for name in &allowed_primitives {
            if primitives::lookup(name).is_none() {
                return Err(GenomeError::UnknownAllowedPrimitive { name: name.clone() });
            }
        }
        Ok(Self {
            max_layers,
            max_nodes,
            allowed_primitives,
        })
    }

    /// Bounds over the whole catalog.
    pub fn with_full_catalog(max_layers: usize, max_nodes: usize) -> Result<Self, GenomeError> {
        let names = primitives::catalog().into_iter().map(|s| s.name).collect();
        Self::new(max_layers, max_nodes, names)
    }
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self::with_full_catalog(5, 3).expect("catalog is nonempty")
    }
}

/// The evolvable description of one pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineGenome {
    /// Creation-ordered identifier, unique within a run. Runtime-only.
    #[serde(skip)]
    pub id: u64,
    /// Node specs per layer; the final layer holds exactly one.
    pub layers: Vec<Vec<NodeSpec>>,
}

impl PipelineGenome {
    pub fn shape(&self) -> CascadeShape {
        CascadeShape {
            node_counts: self.layers.iter().map(Vec::len).collect(),
        }
    }

    pub fn total_nodes(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    /// Checks shape bounds and validates every node against the allow-list
    /// and the catalog grids.
    pub fn validate(&self, bounds: &SearchBounds) -> Result<(), GenomeError> {
        let shape = self.shape();
        shape.validate(bounds.max_layers, bounds.max_nodes)?;
        for (layer_index, layer) in self.layers.iter().enumerate() {
            for (node_index, node) in layer.iter().enumerate() {
                if !bounds.allowed_primitives.contains(&node.primitive) {
                    return Err(GenomeError::PrimitiveNotAllowed {
                        layer: layer_index,
                        node: node_index,
                        name: node.primitive.clone(),
                    });
                }
                primitives::validate_node_spec(node).map_err(|source| GenomeError::BadNode {
                    layer: layer_index,
                    node: node_index,
                    source,
                })?;
            }
        }
        Ok(())
    }

    fn clone_with_id(&self, id: u64) -> Self {
        Self {
            id,
            layers: self.layers.clone(),
        }
    }
}

/// Hands out creation-ordered genome ids.
#[derive(Debug, Default)]
pub struct GenomeIdGen {
    next: u64,
}

impl GenomeIdGen {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_id(&mut self) -> u64 {
        let id = self.next;
        self.next += 1;
        id
    }
}

fn random_node(bounds: &SearchBounds, rng: &mut ChaCha8Rng) -> NodeSpec {
    let name = &bounds.allowed_primitives[rng.random_range(0..bounds.allowed_primitives.len())];
    let prim = primitives::lookup(name).expect("bounds were validated against the catalog");
    let hypers = prim
        .hyper_grid()
        .into_iter()
        .map(|(key, values)| {
            let value = values[rng.random_range(0..values.len())].clone();
            (key, value)
        })
        .collect();
    NodeSpec {
        primitive: name.clone(),
        hypers,
    }
}

fn random_layer(bounds: &SearchBounds, rng: &mut ChaCha8Rng) -> Vec<NodeSpec> {
    let width = rng.random_range(1..=bounds.max_nodes);
    (0..width).map(|_| random_node(bounds, rng)).collect()
}

/// Uniform random genome: layer count in `[1, max_layers]`, each non-final
/// layer's width in `[1, max_nodes]`, a single final node, and every node
/// drawn uniformly over the allow-list and its grid.
pub fn random_genome(
    bounds: &SearchBounds,
    rng_seed: u64,
    ids: &mut GenomeIdGen,
) -> PipelineGenome {
    let mut rng = seed::rng_from(rng_seed);
    let n_layers = rng.random_range(1..=bounds.max_layers);
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers - 1 {
        layers.push(random_layer(bounds, &mut rng));
    }
    layers.push(vec![random_node(bounds, &mut rng)]);
    PipelineGenome {
        id: ids.next_id(),
        layers,
    }
}

/// One concrete mutation move. Moves are enumerated at the granularity of
/// (kind, target position); whatever randomness remains (which primitive,
/// which grid value, the contents of an inserted layer) is drawn after the
/// move itself is chosen uniformly.
#[derive(Clone, Debug, PartialEq, Eq)]
enum MutationMove {
    /// Re-draw one node's primitive type (hypers re-sampled from the new grid).
    RedrawPrimitive { layer: usize, node: usize },
    /// Re-draw one hyperparameter value of one node.
    RedrawHyper {
        layer: usize,
        node: usize,
        key: String,
    },
    /// Insert a randomly generated non-final layer at `position`.
    InsertLayer { position: usize },
    /// Delete one non-final layer.
    DeleteLayer { layer: usize },
    /// Append a random node to a non-final layer.
    AddNode { layer: usize },
    /// Delete one node from a non-final layer; deleting the last node of a
    /// layer removes the layer.
    DeleteNode { layer: usize, node: usize },
}

fn applicable_moves(g: &PipelineGenome, bounds: &SearchBounds) -> Vec<MutationMove> {
    let mut moves = Vec::new();
    let n_layers = g.layers.len();
    for (layer, nodes) in g.layers.iter().enumerate() {
        for (node, spec) in nodes.iter().enumerate() {
            if bounds
                .allowed_primitives
                .iter()
                .any(|p| p != &spec.primitive)
            {
                moves.push(MutationMove::RedrawPrimitive { layer, node });
            }
            let grid = primitives::lookup(&spec.primitive)
                .expect("valid genome references the catalog")
                .hyper_grid();
            for (key, values) in grid {
                if values.len() >= 2 {
                    moves.push(MutationMove::RedrawHyper { layer, node, key });
                }
            }
        }
    }
    if n_layers < bounds.max_layers {
        for position in 0..n_layers {
            moves.push(MutationMove::InsertLayer { position });
        }
    }
    for layer in 0..n_layers.saturating_sub(1) {
        moves.push(MutationMove::DeleteLayer { layer });
        if g.layers[layer].len() < bounds.max_nodes {
            moves.push(MutationMove::AddNode { layer });
        }
        for node in 0..g.layers[layer].len() {
            moves.push(MutationMove::DeleteNode { layer, node });
        }
    }
    moves
}

/// One-step mutation: returns a new genome differing from `g` by exactly one
/// change in the hyperparameter set (primitive type, one hyperparameter
/// value, layer count, or one layer's node count). Moves that would violate
/// the bounds are excluded before the uniform draw; `g` is untouched.
pub fn mutate(
    g: &PipelineGenome,
    bounds: &SearchBounds,
    rng_seed: u64,
    ids: &mut GenomeIdGen,
) -> Result<PipelineGenome, GenomeError> {
    let mut rng = seed::rng_from(rng_seed);
    let moves = applicable_moves(g, bounds);
    if moves.is_empty() {
        return Err(GenomeError::NoApplicableMoves);
    }
    let chosen = &moves[rng.random_range(0..moves.len())];
    let mut layers = g.layers.clone();
    match chosen {
        MutationMove::RedrawPrimitive { layer, node } => {
            let current = &layers[*layer][*node].primitive;
            let others: Vec<&String> = bounds
                .allowed_primitives
                .iter()
                .filter(|p| *p != current)
                .collect();
            let name = others[rng.random_range(0..others.len())].clone();
            let prim = primitives::lookup(&name).expect("allow-list is validated");
            let hypers = prim
                .hyper_grid()
                .into_iter()
                .map(|(key, values)| {
                    let value = values[rng.random_range(0..values.len())].clone();
                    (key, value)
                })
                .collect();
            layers[*layer][*node] = NodeSpec {
                primitive: name,
                hypers,
            };
        }
        MutationMove::RedrawHyper { layer, node, key } => {
            let spec = &mut layers[*layer][*node];
            let grid = primitives::lookup(&spec.primitive)
                .expect("valid genome references the catalog")
                .hyper_grid();
            let current = spec.hypers.get(key).cloned();
            let options: Vec<&HyperValue> = grid[key]
                .iter()
                .filter(|v| Some(*v) != current.as_ref())
                .collect();
            let value = options[rng.random_range(0..options.len())].clone();
            spec.hypers.insert(key.clone(), value);
        }
        MutationMove::InsertLayer { position } => {
            layers.insert(*position, random_layer(bounds, &mut rng));
        }
        MutationMove::DeleteLayer { layer } => {
            layers.remove(*layer);
        }
        MutationMove::AddNode { layer } => {
            let node = random_node(bounds, &mut rng);
            layers[*layer].push(node);
        }
        MutationMove::DeleteNode { layer, node } => {
            layers[*layer].remove(*node);
            if layers[*layer].is_empty() {
                layers.remove(*layer);
            }
        }
    }
    Ok(PipelineGenome {
        id: ids.next_id(),
        layers,
    })
}

/// Splices two genomes at the given cut indices: child one takes the first
/// `cut_a` layers of `a` followed by `b`'s layers from `cut_b` on; child two
/// is the mirror image. Cuts must lie in `[0, layers - 1]`, so every suffix
/// keeps its parent's single-node final layer.
pub fn crossover_at(
    a: &PipelineGenome,
    b: &PipelineGenome,
    cut_a: usize,
    cut_b: usize,
    ids: &mut GenomeIdGen,
) -> (PipelineGenome, PipelineGenome) {
    assert!(
        cut_a < a.layers.len() && cut_b < b.layers.len(),
        "cuts must precede the final layer"
    );
    let splice = |head: &PipelineGenome, cut_h: usize, tail: &PipelineGenome, cut_t: usize| {
        let mut layers: Vec<Vec<NodeSpec>> = head.layers[..cut_h].to_vec();
        layers.extend_from_slice(&tail.layers[cut_t..]);
        layers
    };
    let first = splice(a, cut_a, b, cut_b);
    let second = splice(b, cut_b, a, cut_a);
    (
        PipelineGenome {
            id: ids.next_id(),
            layers: first,
        },
        PipelineGenome {
            id: ids.next_id(),
            layers: second,
        },
    )
}

/// Crossover with uniform random cuts. Cut pairs whose children would exceed
/// `max_layers` are re-drawn (up to 16 attempts); if none fit, the children
/// are clones of `a` and `b` with fresh ids.
pub fn crossover(
    a: &PipelineGenome,
    b: &PipelineGenome,
    bounds: &SearchBounds,
    rng_seed: u64,
    ids: &mut GenomeIdGen,
) -> (PipelineGenome, PipelineGenome) {
    let mut rng = seed::rng_from(rng_seed);
    for _ in 0..16 {
        let cut_a = rng.random_range(0..a.layers.len());
        let cut_b = rng.random_range(0..b.layers.len());
        let len_first = cut_a + (b.layers.len() - cut_b);
        let len_second = cut_b + (a.layers.len() - cut_a);
        if len_first <= bounds.max_layers && len_second <= bounds.max_layers {
            return crossover_at(a, b, cut_a, cut_b, ids);
        }
    }
    (
        a.clone_with_id(ids.next_id()),
        b.clone_with_id(ids.next_id()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_primitive_bounds(max_layers: usize, max_nodes: usize) -> SearchBounds {
        SearchBounds::new(
            max_layers,
            max_nodes,
            vec!["decision_tree".into(), "gaussian_nb".into()],
        )
        .unwrap()
    }

    #[test]
    fn forced_shape_is_single_node() {
        let bounds = two_primitive_bounds(1, 1);
        let mut ids = GenomeIdGen::new();
        for s in 0..20 {
            let g = random_genome(&bounds, s, &mut ids);
            assert_eq!(g.layers.len(), 1);
            assert_eq!(g.layers[0].len(), 1);
            g.validate(&bounds).unwrap();
        }
    }

    #[test]
    fn same_seed_same_genome() {
        let bounds = SearchBounds::default();
        let mut ids_a = GenomeIdGen::new();
        let mut ids_b = GenomeIdGen::new();
        let a = random_genome(&bounds, 99, &mut ids_a);
        let b = random_genome(&bounds, 99, &mut ids_b);
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_covers_the_shape_space() {
        // Chi-square sanity against uniform over layer counts {1..5} and
        // non-final node counts {1..3}; reject only below p = 0.001.
        let bounds = SearchBounds::default();
        let mut ids = GenomeIdGen::new();
        let mut layer_counts = [0usize; 5];
        let mut node_counts = [0usize; 3];
        let samples = 10_000;
        for s in 0..samples {
            let g = random_genome(&bounds, s, &mut ids);
            layer_counts[g.layers.len() - 1] += 1;
            for layer in &g.layers[..g.layers.len() - 1] {
                node_counts[layer.len() - 1] += 1;
            }
        }
        assert!(layer_counts.iter().all(|&c| c > 0), "{layer_counts:?}");
        assert!(node_counts.iter().all(|&c| c > 0), "{node_counts:?}");

        let chi2 = |observed: &[usize]| {
            let total: usize = observed.iter().sum();
            let expected = total as f64 / observed.len() as f64;
            observed
                .iter()
                .map(|&o| {
                    let d = o as f64 - expected;
                    d * d / expected
                })
                .sum::<f64>()
        };
        // Critical values at p = 0.001: df=4 -> 18.467, df=2 -> 13.816.
        assert!(
            chi2(&layer_counts) < 18.467,
            "layer counts skewed: {layer_counts:?}"
        );
        assert!(
            chi2(&node_counts) < 13.816,
            "node counts skewed: {node_counts:?}"
        );
    }

    #[test]
    fn bounded_single_node_mutations_stay_in_place() {
        // With (1,1) bounds and two primitives, only the node-content moves
        // (primitive or hyper re-draw) are applicable.
        let bounds = two_primitive_bounds(1, 1);
        let mut ids = GenomeIdGen::new();
        let g = random_genome(&bounds, 0, &mut ids);
        for s in 0..200 {
            let m = mutate(&g, &bounds, s, &mut ids).unwrap();
            assert_eq!(m.layers.len(), 1);
            assert_eq!(m.layers[0].len(), 1);
            let node_changed = m.layers[0][0] != g.layers[0][0];
            assert!(node_changed, "seed {s} produced a no-op mutation");
        }
    }

    #[test]
    fn at_max_layers_insertion_is_excluded() {
        let bounds = two_primitive_bounds(3, 2);
        let mut ids = GenomeIdGen::new();
        // Deterministically build a genome at the layer bound.
        let mut g = random_genome(
            &SearchBounds::new(1, 2, bounds.allowed_primitives.clone()).unwrap(),
            1,
            &mut ids,
        );
        while g.layers.len() < 3 {
            g.layers.insert(0, g.layers[g.layers.len() - 1].clone());
        }
        g.validate(&bounds).unwrap();
        for s in 0..300 {
            let m = mutate(&g, &bounds, s, &mut ids).unwrap();
            assert!(m.layers.len() <= 3, "seed {s} exceeded max_layers");
            m.validate(&bounds).unwrap();
        }
    }

    /// Classifies the difference between a parent and a mutated child and
    /// asserts it is exactly one move from the taxonomy.
    fn assert_single_edit(parent: &PipelineGenome, child: &PipelineGenome) {
        let pl = parent.layers.len();
        let cl = child.layers.len();
        if pl == cl {
            let differing: Vec<usize> = (0..pl)
                .filter(|&i| parent.layers[i] != child.layers[i])
                .collect();
            if differing.len() == 1
                && parent.layers[differing[0]].len() == child.layers[differing[0]].len()
            {
                // Node-content change (a)/(b) or a same-layer rebuild.
                let li = differing[0];
                let diff_nodes: Vec<usize> = (0..parent.layers[li].len())
                    .filter(|&j| parent.layers[li][j] != child.layers[li][j])
                    .collect();
                assert_eq!(diff_nodes.len(), 1, "more than one node changed");
                let p = &parent.layers[li][diff_nodes[0]];
                let c = &child.layers[li][diff_nodes[0]];
                if p.primitive == c.primitive {
                    let changed: Vec<&String> = p
                        .hypers
                        .iter()
                        .filter(|(k, v)| c.hypers.get(*k) != Some(v))
                        .map(|(k, _)| k)
                        .collect();
                    assert_eq!(changed.len(), 1, "exactly one hyper must change");
                }
                return;
            }
            // Same layer count but a node count changed: move (d).
            assert_eq!(differing.len(), 1, "exactly one layer may change");
            let li = differing[0];
            let (a, b) = (&parent.layers[li], &child.layers[li]);
            let grew = b.len() == a.len() + 1 && b[..a.len()] == a[..];
            let shrank = a.len() == b.len() + 1
                && (0..a.len()).any(|skip| {
                    let mut rebuilt = a.clone();
                    rebuilt.remove(skip);
                    rebuilt == *b
                });
            assert!(grew || shrank, "layer {li} is not a single node add/delete");
            return;
        }
        if cl == pl + 1 {
            // An inserted layer: removing it must recover the parent.
            let found = (0..cl).any(|p| {
                let mut rebuilt = child.layers.clone();
                rebuilt.remove(p);
                rebuilt == parent.layers
            });
            assert!(found, "no single inserted layer explains the child");
            return;
        }
        if cl + 1 == pl {
            let found = (0..pl).any(|p| {
                let mut rebuilt = parent.layers.clone();
                rebuilt.remove(p);
                rebuilt == child.layers
            });
            assert!(found, "no single deleted layer explains the child");
            return;
        }
        panic!("layer count changed by more than one: {pl} -> {cl}");
    }

    #[test]
    fn mutations_are_single_edits_and_valid() {
        let bounds = SearchBounds::default();
        let mut ids = GenomeIdGen::new();
        for s in 0..1000u64 {
            let parent = random_genome(&bounds, seed::derive(3, "parent", &[s]), &mut ids);
            let child = mutate(&parent, &bounds, seed::derive(3, "child", &[s]), &mut ids).unwrap();
            child.validate(&bounds).unwrap();
            assert_single_edit(&parent, &child);
            // Parent untouched.
            parent.validate(&bounds).unwrap();
        }
    }

    #[test]
    fn single_layer_crossover_swaps_parents() {
        let bounds = two_primitive_bounds(1, 1);
        let mut ids = GenomeIdGen::new();
        let a = random_genome(&bounds, 1, &mut ids);
        let b = random_genome(&bounds, 2, &mut ids);
        let (c1, c2) = crossover(&a, &b, &bounds, 3, &mut ids);
        // Only cuts (0, 0) exist: child one is b's layers, child two is a's.
        assert_eq!(c1.layers, b.layers);
        assert_eq!(c2.layers, a.layers);
        assert_ne!(c1.id, b.id);
    }

    #[test]
    fn crossover_at_splices_hand_computed_layers() {
        let bounds = SearchBounds::default();
        let mut ids = GenomeIdGen::new();
        let mut a = random_genome(&SearchBounds::with_full_catalog(1, 3).unwrap(), 5, &mut ids);
        let mut b = random_genome(&SearchBounds::with_full_catalog(1, 3).unwrap(), 6, &mut ids);
        // Build a three-layer a and a two-layer b with distinct node specs.
        let filler_a = random_genome(&SearchBounds::with_full_catalog(1, 3).unwrap(), 7, &mut ids);
        let filler_b = random_genome(&SearchBounds::with_full_catalog(1, 3).unwrap(), 8, &mut ids);
        a.layers.insert(0, filler_a.layers[0].clone());
        a.layers.insert(1, filler_b.layers[0].clone());
        b.layers.insert(0, filler_a.layers[0].clone());
        a.validate(&bounds).unwrap();
        b.validate(&bounds).unwrap();

        let (c1, c2) = crossover_at(&a, &b, 1, 1, &mut ids);
        assert_eq!(c1.layers, vec![a.layers[0].clone(), b.layers[1].clone()]);
        assert_eq!(
            c2.layers,
            vec![
                b.layers[0].clone(),
                a.layers[1].clone(),
                a.layers[2].clone()
            ]
        );
    }

    #[test]
    fn random_crossovers_yield_valid_children() {
        let bounds = SearchBounds::default();
        let mut ids = GenomeIdGen::new();
        for s in 0..1000u64 {
            let a = random_genome(&bounds, seed::derive(11, "a", &[s]), &mut ids);
            let b = random_genome(&bounds, seed::derive(11, "b", &[s]), &mut ids);
            let (c1, c2) = crossover(&a, &b, &bounds, seed::derive(11, "x", &[s]), &mut ids);
            c1.validate(&bounds).unwrap();
            c2.validate(&bounds).unwrap();
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn variation_closure(seed_value in 0u64..1_000_000) {
            let bounds = SearchBounds::default();
            let mut ids = GenomeIdGen::new();
            let a = random_genome(&bounds, seed::derive(seed_value, "pa", &[]), &mut ids);
            let b = random_genome(&bounds, seed::derive(seed_value, "pb", &[]), &mut ids);
            let m = mutate(&a, &bounds, seed::derive(seed_value, "m", &[]), &mut ids).unwrap();
            let (c1, c2) = crossover(&a, &b, &bounds, seed_value, &mut ids);
            prop_assert!(m.validate(&bounds).is_ok());
            prop_assert!(c1.validate(&bounds).is_ok());
            prop_assert!(c2.validate(&bounds).is_ok());
            // Last layers stay single-node.
            prop_assert_eq!(m.layers.last().unwrap().len(), 1);
            prop_assert_eq!(c1.layers.last().unwrap().len(), 1);
            prop_assert_eq!(c2.layers.last().unwrap().len(), 1);
        }
    }
}
