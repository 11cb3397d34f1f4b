//! The generational search driver.
//!
//! Each generation randomly splits the population into two halves, mutates
//! one half, crosses over consecutive pairs of the other, evaluates the
//! union of parents and offspring (parents reuse cached scores — the
//! cross-validation folds are fixed per run, so caching is exact), and keeps
//! the top N by fitness with a parsimony-then-id tiebreak. Selecting from
//! the union makes the best score non-decreasing across generations.
//!
//! Evaluation is the parallel region: up to `worker_count` concurrent
//! cross-validations over the shared immutable training set, with a barrier
//! before selection. Candidate seeds derive from logical positions, so the
//! outcome is identical for any worker count.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::{self, TrainedPipeline};
use crate::dataset::Dataset;
use crate::genome::{self, GenomeError, GenomeIdGen, PipelineGenome, SearchBounds};
use crate::metrics::{self, FitnessRecord};
use crate::seed;

/// Knobs of one search run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EAConfig {
    /// Population size N; even, at least 4.
    pub population_n: usize,
    /// Generation count M.
    pub iterations_m: usize,
    pub bounds: SearchBounds,
    pub cv_folds: usize,
    pub master_seed: u64,
    pub worker_count: usize,
}

impl Default for EAConfig {
    fn default() -> Self {
        Self {
            population_n: 200,
            iterations_m: 10,
            bounds: SearchBounds::default(),
            cv_folds: 5,
            master_seed: 42,
            worker_count: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Bounds(#[from] GenomeError),
    #[error("refitting pipeline {rank} failed: {source}")]
    Refit {
        rank: usize,
        #[source]
        source: cascade::CascadeError,
    },
}

impl EAConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        if self.population_n < 4 || !self.population_n.is_multiple_of(2) {
            return Err(EvolutionError::Config(format!(
                "population must be even and at least 4, got {}",
                self.population_n
            )));
        }
        if self.cv_folds < 2 {
            return Err(EvolutionError::Config(format!(
                "cv_folds must be at least 2, got {}",
                self.cv_folds
            )));
        }
        if self.worker_count < 1 {
            return Err(EvolutionError::Config(
                "worker_count must be at least 1".into(),
            ));
        }
        // Re-run the bounds checks; the struct fields are public.
        SearchBounds::new(
            self.bounds.max_layers,
            self.bounds.max_nodes,
            self.bounds.allowed_primitives.clone(),
        )?;
        Ok(())
    }
}

/// One population member in a report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DigestEntry {
    pub genome_id: u64,
    pub cv_score: f64,
    pub total_nodes: usize,
}

/// Per-generation statistics over the post-selection population.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation_index: usize,
    pub best_score: f64,
    pub median_score: f64,
    pub mean_score: f64,
    /// Survivors ranked by (score desc, nodes asc, id asc).
    pub population_digest: Vec<DigestEntry>,
}

/// Initial population: N random genomes with ids `0..N`, each drawn from a
/// seed derived from `(master_seed, "init", index)`.
pub fn initialize(config: &EAConfig, ids: &mut GenomeIdGen) -> Vec<PipelineGenome> {
    (0..config.population_n)
        .map(|index| {
            let s = seed::derive(config.master_seed, "init", &[index as u64]);
            genome::random_genome(&config.bounds, s, ids)
        })
        .collect()
}

/// Scores every pool member not yet in the cache, in parallel.
fn evaluate_pool<E>(
    pool: &[PipelineGenome],
    cache: &mut HashMap<u64, FitnessRecord>,
    evaluator: &E,
    workers: &rayon::ThreadPool,
) where
    E: Fn(&PipelineGenome) -> FitnessRecord + Sync,
{
    let missing: Vec<&PipelineGenome> =
        pool.iter().filter(|g| !cache.contains_key(&g.id)).collect();
    let records: Vec<FitnessRecord> =
        workers.install(|| missing.par_iter().map(|g| evaluator(g)).collect());
    for record in records {
        cache.insert(record.genome_id, record);
    }
}

/// Total order for selection: higher score first, then fewer nodes, then
/// lower (older) id.
fn selection_key(cache: &HashMap<u64, FitnessRecord>, g: &PipelineGenome) -> (f64, usize, u64) {
    let record = &cache[&g.id];
    (record.cv_score, record.total_nodes, g.id)
}

fn rank_population(population: &mut [PipelineGenome], cache: &HashMap<u64, FitnessRecord>) {
    population.sort_by(|a, b| {
        let (sa, na, ia) = selection_key(cache, a);
        let (sb, nb, ib) = selection_key(cache, b);
        sb.total_cmp(&sa).then(na.cmp(&nb)).then(ia.cmp(&ib))
    });
}

fn report_for(
    generation_index: usize,
    ranked: &[PipelineGenome],
    cache: &HashMap<u64, FitnessRecord>,
) -> GenerationReport {
    let digest: Vec<DigestEntry> = ranked
        .iter()
        .map(|g| {
            let r = &cache[&g.id];
            DigestEntry {
                genome_id: g.id,
                cv_score: r.cv_score,
                total_nodes: r.total_nodes,
            }
        })
        .collect();
    let scores: Vec<f64> = digest.iter().map(|d| d.cv_score).collect();
    let n = scores.len();
    // Scores are sorted descending already.
    let median = if n % 2 == 1 {
        scores[n / 2]
    } else {
        (scores[n / 2 - 1] + scores[n / 2]) / 2.0
    };
    GenerationReport {
        generation_index,
        best_score: scores.first().copied().unwrap_or(0.0),
        median_score: median,
        mean_score: scores.iter().sum::<f64>() / n as f64,
        population_digest: digest,
    }
}

/// One generation: variation, evaluation of parents plus offspring, and
/// elitist selection of the top N. Returns the ranked survivors and their
/// report; `cache` keeps survivor records for reuse.
pub fn step<E>(
    population: Vec<PipelineGenome>,
    cache: &mut HashMap<u64, FitnessRecord>,
    config: &EAConfig,
    gen_index: usize,
    ids: &mut GenomeIdGen,
    evaluator: &E,
    workers: &rayon::ThreadPool,
) -> (Vec<PipelineGenome>, GenerationReport)
where
    E: Fn(&PipelineGenome) -> FitnessRecord + Sync,
{
    let n = population.len();
    let half = n / 2;
    let mut order: Vec<usize> = (0..n).collect();

    let mut rng = seed::rng(config.master_seed, "partition", &[gen_index as u64]);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let (mutation_half, crossover_half) = order.split_at(half);

    let mut offspring: Vec<PipelineGenome> = Vec::with_capacity(n);
    for (slot, &idx) in mutation_half.iter().enumerate() {
        let s = seed::derive(
            config.master_seed,
            "mutate",
            &[gen_index as u64, slot as u64],
        );
        match genome::mutate(&population[idx], &config.bounds, s, ids) {
            Ok(child) => offspring.push(child),
            Err(err) => {
                // Unreachable with the shipped catalog (every grid has a
                // multi-valued key); degrade to a copy rather than abort.
                log::warn!("mutation fell back to a clone: {err}");
                let mut clone = population[idx].clone();
                clone.id = ids.next_id();
                offspring.push(clone);
            }
        }
    }
    let mut pairs = crossover_half.chunks_exact(2);
    for (pair_index, pair) in pairs.by_ref().enumerate() {
        let s = seed::derive(
            config.master_seed,
            "cross",
            &[gen_index as u64, pair_index as u64],
        );
        let (c1, c2) = genome::crossover(
            &population[pair[0]],
            &population[pair[1]],
            &config.bounds,
            s,
            ids,
        );
        offspring.push(c1);
        offspring.push(c2);
    }
    // Odd crossover half (N/2 odd): the unpaired member passes through.
    for &idx in pairs.remainder() {
        let mut clone = population[idx].clone();
        clone.id = ids.next_id();
        offspring.push(clone);
    }
    debug_assert_eq!(offspring.len(), n);

    let mut pool: Vec<PipelineGenome> = population;
    pool.extend(offspring);
    evaluate_pool(&pool, cache, evaluator, workers);

    rank_population(&mut pool, cache);
    pool.truncate(n);
    let survivor_ids: std::collections::HashSet<u64> = pool.iter().map(|g| g.id).collect();
    cache.retain(|id, _| survivor_ids.contains(id));

    let report = report_for(gen_index, &pool, cache);
    (pool, report)
}

/// Runs the full loop against an arbitrary evaluator and returns the final
/// population ranked best-first with its fitness records. `on_generation`
/// fires once for the evaluated initial population (index 0) and once per
/// step (1..=M).
pub fn evolve<E>(
    config: &EAConfig,
    evaluator: &E,
    mut on_generation: impl FnMut(&GenerationReport),
) -> Result<Vec<(PipelineGenome, FitnessRecord)>, EvolutionError>
where
    E: Fn(&PipelineGenome) -> FitnessRecord + Sync,
{
    config.validate()?;
    let workers = rayon::ThreadPoolBuilder::new()
        .num_threads(config.worker_count)
        .build()
        .map_err(|e| EvolutionError::Config(format!("cannot build worker pool: {e}")))?;

    let mut ids = GenomeIdGen::new();
    let mut cache: HashMap<u64, FitnessRecord> = HashMap::new();
    let mut population = initialize(config, &mut ids);
    evaluate_pool(&population, &mut cache, evaluator, &workers);
    rank_population(&mut population, &cache);
    on_generation(&report_for(0, &population, &cache));

    for gen_index in 1..=config.iterations_m {
        let (next, report) = step(
            population, &mut cache, config, gen_index, &mut ids, evaluator, &workers,
        );
        population = next;
        on_generation(&report);
    }

    Ok(population
        .into_iter()
        .map(|g| {
            let record = cache[&g.id].clone();
            (g, record)
        })
        .collect())
}

/// Production evaluator: cross-validated balanced accuracy against a fixed
/// fold partition derived once per run. Candidates that cannot be scored at
/// all get fitness 0 so the search routes around them.
pub fn fitness_evaluator<'a>(
    train: &'a Dataset,
    config: &EAConfig,
) -> impl Fn(&PipelineGenome) -> FitnessRecord + Sync + 'a {
    let cv_folds = config.cv_folds;
    let eval_seed = seed::derive(config.master_seed, "eval", &[]);
    move |g: &PipelineGenome| match metrics::cross_validate(g, train, cv_folds, eval_seed) {
        Ok(record) => record,
        Err(err) => {
            log::warn!("genome {}: cross-validation failed outright: {err}", g.id);
            FitnessRecord {
                genome_id: g.id,
                cv_score: 0.0,
                fold_scores: vec![0.0; cv_folds],
                total_nodes: g.total_nodes(),
            }
        }
    }
}

/// Full search: evolve on `train`, take the final population's top ten
/// (fewer if N < 10), refit each on the whole training set, and return them
/// ranked. Deterministic in `(config, train)` whatever the worker count.
pub fn run(
    config: &EAConfig,
    train: &Dataset,
    on_generation: impl FnMut(&GenerationReport),
) -> Result<Vec<(TrainedPipeline, FitnessRecord)>, EvolutionError> {
    let evaluator = fitness_evaluator(train, config);
    let ranked = evolve(config, &evaluator, on_generation)?;
    let keep = ranked.len().min(10);
    let mut out = Vec::with_capacity(keep);
    for (rank, (genome, record)) in ranked.into_iter().take(keep).enumerate() {
        let refit_seed = seed::derive(config.master_seed, "refit", &[genome.id]);
        let pipeline = cascade::fit_pipeline(&genome, train, refit_seed).map_err(|source| {
            EvolutionError::Refit {
                rank: rank + 1,
                source,
            }
        })?;
        out.push((pipeline, record));
    }
    Ok(out)
}
