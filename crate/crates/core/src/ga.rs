//! Genetic hyperparameter search scored by k-fold cross-validation.
//!
//! A chromosome is one full hyperparameter assignment; each gene lives on a
//! bounded `{min, max, step}` lattice. Every generation evaluates its
//! chromosomes, keeps the lowest-fitness half, and refills the population by
//! uniform crossover of random survivor pairs plus per-gene mutation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::gbt::{self, GbtError, LossKind, TrainConfig};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum GaError {
    #[error("invalid search space: {0}")]
    BadSpace(String),
    #[error("invalid GA config: {0}")]
    BadConfig(String),
    #[error("cross-validation needs at least {folds} rows, got {rows}")]
    TooFewRows { rows: usize, folds: usize },
    #[error("chromosome has {got} genes, space has {expected}")]
    GeneCount { expected: usize, got: usize },
    #[error("search space has no parameter named `{0}`")]
    UnknownParam(String),
    #[error(transparent)]
    Train(#[from] GbtError),
}

/// One searchable hyperparameter: a bounded range with a granular step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl ParamSpec {
    pub fn new(name: &str, min: f64, max: f64, step: f64) -> Self {
        Self {
            name: name.to_string(),
            min,
            max,
            step,
        }
    }

    /// Number of lattice points, `round((max - min) / step) + 1`.
    pub fn lattice_size(&self) -> usize {
        ((self.max - self.min) / self.step).round() as usize + 1
    }

    pub fn value(&self, index: u32) -> f64 {
        self.min + index as f64 * self.step
    }

    fn validate(&self) -> Result<(), GaError> {
        if !(self.min < self.max) {
            return Err(GaError::BadSpace(format!(
                "{}: min {} must be below max {}",
                self.name, self.min, self.max
            )));
        }
        if !(self.step > 0.0) {
            return Err(GaError::BadSpace(format!(
                "{}: step must be positive",
                self.name
            )));
        }
        let steps = (self.max - self.min) / self.step;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(GaError::BadSpace(format!(
                "{}: step {} does not divide the range [{}, {}]",
                self.name, self.step, self.min, self.max
            )));
        }
        Ok(())
    }
}

/// Bounded lattice per hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<ParamSpec>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self, GaError> {
        if params.is_empty() {
            return Err(GaError::BadSpace("no parameters to search".into()));
        }
        for p in &params {
            p.validate()?;
        }
        Ok(Self { params })
    }

    /// The six tree hyperparameters with broad ranges and granular steps.
    pub fn default_tree_space() -> Self {
        Self::new(vec![
            ParamSpec::new("gamma", 0.0, 5.0, 0.1),
            ParamSpec::new("max_depth", 2.0, 10.0, 1.0),
            ParamSpec::new("subsample", 0.5, 1.0, 0.05),
            ParamSpec::new("learning_rate", 0.01, 0.3, 0.01),
            ParamSpec::new("min_child_weight", 0.0, 10.0, 0.5),
            ParamSpec::new("colsample_bytree", 0.5, 1.0, 0.05),
        ])
        .expect("default space is valid")
    }

    pub fn total_points(&self) -> usize {
        self.params.iter().map(|p| p.lattice_size()).product()
    }
}

/// One full hyperparameter assignment, stored as lattice indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chromosome {
    genes: Vec<u32>,
}

impl Chromosome {
    pub fn from_indices(genes: Vec<u32>, space: &SearchSpace) -> Result<Self, GaError> {
        if genes.len() != space.params.len() {
            return Err(GaError::GeneCount {
                expected: space.params.len(),
                got: genes.len(),
            });
        }
        for (g, p) in genes.iter().zip(&space.params) {
            if *g as usize >= p.lattice_size() {
                return Err(GaError::BadSpace(format!(
                    "gene {} out of range for {}",
                    g, p.name
                )));
            }
        }
        Ok(Self { genes })
    }

    pub fn indices(&self) -> &[u32] {
        &self.genes
    }

    /// Materialized parameter values in space order.
    pub fn values(&self, space: &SearchSpace) -> Vec<f64> {
        self.genes
            .iter()
            .zip(&space.params)
            .map(|(g, p)| p.value(*g))
            .collect()
    }

    pub fn value_of(&self, space: &SearchSpace, name: &str) -> Result<f64, GaError> {
        let i = space
            .params
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| GaError::UnknownParam(name.to_string()))?;
        Ok(space.params[i].value(self.genes[i]))
    }

    /// Overlay this chromosome's genes onto a base training config. Genes
    /// are matched by the tree hyperparameter names; unmatched names error.
    pub fn to_train_config(
        &self,
        space: &SearchSpace,
        base: &TrainConfig,
    ) -> Result<TrainConfig, GaError> {
        let mut config = base.clone();
        for (gene, param) in self.genes.iter().zip(&space.params) {
            let value = param.value(*gene);
            match param.name.as_str() {
                "gamma" => config.gamma = value,
                "max_depth" => config.max_depth = value.round() as usize,
                "subsample" => config.subsample = value,
                "learning_rate" => config.learning_rate = value,
                "min_child_weight" => config.min_child_weight = value,
                "colsample_bytree" => config.colsample_bytree = value,
                other => return Err(GaError::UnknownParam(other.to_string())),
            }
        }
        Ok(config)
    }
}

/// A population of chromosomes with their fitness values once evaluated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Generation {
    pub members: Vec<Chromosome>,
    /// One fitness per member; `None` until evaluated.
    pub fitness: Vec<Option<f64>>,
}

impl Generation {
    fn unevaluated(members: Vec<Chromosome>) -> Self {
        let n = members.len();
        Self {
            members,
            fitness: vec![None; n],
        }
    }

    /// Indices sorted by ascending fitness, ties by position.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.members.len()).collect();
        order.sort_by(|a, b| {
            let fa = self.fitness[*a].expect("generation fully evaluated");
            let fb = self.fitness[*b].expect("generation fully evaluated");
            fa.partial_cmp(&fb).unwrap().then(a.cmp(b))
        });
        order
    }

    pub fn best(&self) -> Option<(&Chromosome, f64)> {
        let order = self.ranking();
        order
            .first()
            .map(|&i| (&self.members[i], self.fitness[i].unwrap()))
    }
}

/// Knobs of the evolutionary loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    /// How many lowest-fitness chromosomes survive each generation.
    pub survivors: usize,
    /// Per-gene probability of mutating to a random lattice value.
    pub mutation_prob: f64,
    /// Stop once the best fitness improves by less than this.
    pub tolerance: f64,
    pub max_generations: usize,
    /// Cross-validation folds.
    pub folds: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 40,
            survivors: 20,
            mutation_prob: 0.1,
            tolerance: 1e-4,
            max_generations: 30,
            folds: 5,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), GaError> {
        if self.population == 0 || self.survivors == 0 || self.survivors >= self.population {
            return Err(GaError::BadConfig(format!(
                "need 0 < survivors < population, got {}/{}",
                self.survivors, self.population
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(GaError::BadConfig("mutation_prob must be in [0, 1]".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(GaError::BadConfig("tolerance must be positive".into()));
        }
        if self.max_generations == 0 {
            return Err(GaError::BadConfig("max_generations must be >= 1".into()));
        }
        if self.folds < 2 {
            return Err(GaError::BadConfig("folds must be >= 2".into()));
        }
        Ok(())
    }
}

fn random_chromosome(space: &SearchSpace, rng: &mut ChaCha8Rng) -> Chromosome {
    let genes = space
        .params
        .iter()
        .map(|p| rng.gen_range(0..p.lattice_size() as u32))
        .collect();
    Chromosome { genes }
}

/// Population of random chromosomes, uniform over each gene's lattice.
pub fn init_generation(space: &SearchSpace, config: &GaConfig) -> Result<Generation, GaError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let members = (0..config.population)
        .map(|_| random_chromosome(space, &mut rng))
        .collect();
    Ok(Generation::unevaluated(members))
}

/// Deterministic shuffled fold assignment: `folds` groups of size `m / folds`
/// rounded up for the first `m % folds` groups.
pub fn fold_indices(rows: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let base = rows / folds;
    let extra = rows % folds;
    let mut out = Vec::with_capacity(folds);
    let mut cursor = 0;
    for f in 0..folds {
        let size = base + usize::from(f < extra);
        out.push(order[cursor..cursor + size].to_vec());
        cursor += size;
    }
    out
}

/// Mean held-out loss over k seeded folds: RMSE for the squared-error loss,
/// error rate for the logistic loss.
pub fn cv_fitness<S: Scalar>(
    matrix: &FeatureMatrix<S>,
    labels: &[S],
    train_config: &TrainConfig,
    folds: usize,
    loss: LossKind,
    seed: u64,
) -> Result<f64, GaError> {
    if matrix.rows() < folds {
        return Err(GaError::TooFewRows {
            rows: matrix.rows(),
            folds,
        });
    }
    let assignment = fold_indices(matrix.rows(), folds, seed);
    let mut total = 0.0;
    for (f, held_out) in assignment.iter().enumerate() {
        let train_rows: Vec<usize> = assignment
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, rows)| rows.iter().copied())
            .collect();
        let train_matrix = matrix.select_rows(&train_rows);
        let train_labels: Vec<S> = train_rows.iter().map(|&i| labels[i]).collect();
        let mut fold_config = train_config.clone();
        fold_config.seed = seed.wrapping_add(f as u64 + 1);
        let model = gbt::train(&train_matrix, &train_labels, &fold_config, loss)?;

        let mut fold_metric = 0.0;
        for &i in held_out {
            let pred = model.predict(matrix.row(i))?.to_report();
            let y = labels[i].to_report();
            match loss {
                LossKind::SquaredError => fold_metric += (pred - y) * (pred - y),
                LossKind::Logistic => {
                    let predicted = if pred >= 0.5 { 1.0 } else { 0.0 };
                    if predicted != y {
                        fold_metric += 1.0;
                    }
                }
            }
        }
        let n = held_out.len() as f64;
        total += match loss {
            LossKind::SquaredError => (fold_metric / n).sqrt(),
            LossKind::Logistic => fold_metric / n,
        };
    }
    Ok(total / folds as f64)
}

/// One evolution step: keep the `survivors` lowest-fitness chromosomes (in
/// ranking order at the front of the new generation), refill with uniform
/// crossover of random survivor pairs, and mutate each child gene to a
/// random lattice value with the configured probability.
pub fn evolve_step(
    generation: &Generation,
    space: &SearchSpace,
    config: &GaConfig,
    rng: &mut ChaCha8Rng,
) -> Generation {
    let order = generation.ranking();
    let survivors: Vec<Chromosome> = order[..config.survivors]
        .iter()
        .map(|&i| generation.members[i].clone())
        .collect();

    let mut next = Generation::unevaluated(Vec::with_capacity(config.population));
    for (slot, &i) in order[..config.survivors].iter().enumerate() {
        next.members.push(generation.members[i].clone());
        next.fitness.push(generation.fitness[i]);
        debug_assert_eq!(next.members[slot], survivors[slot]);
    }
    while next.members.len() < config.population {
        let a = &survivors[rng.gen_range(0..survivors.len())];
        let b = &survivors[rng.gen_range(0..survivors.len())];
        let mut child: Vec<u32> = a
            .genes
            .iter()
            .zip(&b.genes)
            .map(|(ga, gb)| if rng.gen_bool(0.5) { *ga } else { *gb })
            .collect();
        for (gene, param) in child.iter_mut().zip(&space.params) {
            if rng.gen_bool(config.mutation_prob) {
                *gene = rng.gen_range(0..param.lattice_size() as u32);
            }
        }
        next.members.push(Chromosome { genes: child });
        next.fitness.push(None);
    }
    next
}

/// Per-generation record of the fitness trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

/// Outcome of [`optimize`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Optimized {
    pub best: Chromosome,
    pub best_fitness: f64,
    /// Best-so-far and generation-mean fitness per generation; the best
    /// column never rises.
    pub history: Vec<TraceEntry>,
}

/// Evaluate-evolve loop: run until the best fitness stops improving by at
/// least the tolerance, or the generation budget runs out. Returns the best
/// chromosome ever evaluated with the per-generation fitness trace.
pub fn optimize<F>(
    space: &SearchSpace,
    config: &GaConfig,
    fitness: F,
) -> Result<Optimized, GaError>
where
    F: Fn(&Chromosome) -> Result<f64, GaError> + Sync,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut generation = init_generation(space, config)?;
    let mut overall: Option<(Chromosome, f64)> = None;
    let mut history = Vec::new();

    for gen_index in 0..config.max_generations {
        // Fitness evaluations within a generation are independent; results
        // are gathered positionally so evolution is schedule-independent.
        let pending: Vec<usize> = (0..generation.members.len())
            .filter(|&i| generation.fitness[i].is_none())
            .collect();
        let evaluated: Vec<f64> = pending
            .par_iter()
            .map(|&i| fitness(&generation.members[i]))
            .collect::<Result<_, GaError>>()?;
        for (&i, value) in pending.iter().zip(evaluated) {
            generation.fitness[i] = Some(value);
        }
        let sum: f64 = generation.fitness.iter().map(|f| f.unwrap()).sum();
        let (gen_best, gen_best_fitness) = generation.best().expect("non-empty generation");
        if overall
            .as_ref()
            .map_or(true, |(_, best)| gen_best_fitness < *best)
        {
            overall = Some((gen_best.clone(), gen_best_fitness));
        }
        let running_best = overall.as_ref().unwrap().1;
        history.push(TraceEntry {
            generation: gen_index,
            best: running_best,
            mean: sum / generation.members.len() as f64,
        });

        if history.len() >= 2 {
            let prev = history[history.len() - 2].best;
            if (prev - running_best).abs() < config.tolerance {
                break;
            }
        }
        if gen_index + 1 < config.max_generations {
            generation = evolve_step(&generation, space, config, &mut rng);
        }
    }

    let (best, best_fitness) = overall.expect("at least one generation evaluated");
    Ok(Optimized {
        best,
        best_fitness,
        history,
    })
}

/// GA search over the tree hyperparameters with k-fold CV fitness.
pub fn optimize_train_config<S: Scalar>(
    matrix: &FeatureMatrix<S>,
    labels: &[S],
    space: &SearchSpace,
    config: &GaConfig,
    base: &TrainConfig,
    loss: LossKind,
) -> Result<(TrainConfig, Optimized), GaError> {
    let folds = config.folds;
    let seed = config.seed;
    let result = optimize(space, config, |chromosome| {
        let candidate = chromosome.to_train_config(space, base)?;
        cv_fitness(matrix, labels, &candidate, folds, loss, seed)
    })?;
    let tuned = result.best.to_train_config(space, base)?;
    Ok((tuned, result))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surrogate_space() -> SearchSpace {
        SearchSpace::new(vec![ParamSpec::new("x", 0.0, 10.0, 0.5)]).unwrap()
    }

    #[test]
    fn lattice_sizes() {
        let space = SearchSpace::default_tree_space();
        let sizes: Vec<usize> = space.params.iter().map(|p| p.lattice_size()).collect();
        assert_eq!(sizes, vec![51, 9, 11, 30, 21, 11]);
    }

    #[test]
    fn bad_spaces_rejected() {
        assert!(SearchSpace::new(vec![ParamSpec::new("x", 1.0, 0.0, 0.1)]).is_err());
        assert!(SearchSpace::new(vec![ParamSpec::new("x", 0.0, 1.0, 0.0)]).is_err());
        assert!(SearchSpace::new(vec![ParamSpec::new("x", 0.0, 1.0, 0.3)]).is_err());
    }

    #[test]
    fn init_is_deterministic_and_in_bounds() {
        let space = SearchSpace::default_tree_space();
        let config = GaConfig::default();
        let a = init_generation(&space, &config).unwrap();
        let b = init_generation(&space, &config).unwrap();
        assert_eq!(a.members, b.members);
        for seed in 0..1000 {
            let gen = init_generation(
                &space,
                &GaConfig {
                    seed,
                    ..GaConfig::default()
                },
            )
            .unwrap();
            for member in &gen.members {
                for (g, p) in member.indices().iter().zip(&space.params) {
                    assert!((*g as usize) < p.lattice_size());
                }
            }
        }
    }

    #[test]
    fn degenerate_lattice_gives_identical_chromosomes() {
        // A zero-width gene range is invalid, so the tightest lattice has a
        // single step; pin both points and check init stays on them.
        let space = SearchSpace::new(vec![ParamSpec::new("x", 3.0, 3.5, 0.5)]).unwrap();
        assert_eq!(space.params[0].lattice_size(), 2);
        let gen = init_generation(&space, &GaConfig::default()).unwrap();
        assert!(gen
            .members
            .iter()
            .all(|m| m.values(&space)[0] == 3.0 || m.values(&space)[0] == 3.5));
    }

    #[test]
    fn zero_mutation_identical_survivors_clone_through() {
        let space = surrogate_space();
        let config = GaConfig {
            population: 6,
            survivors: 3,
            mutation_prob: 0.0,
            ..GaConfig::default()
        };
        let mut generation = init_generation(&space, &config).unwrap();
        let template = generation.members[0].clone();
        for m in &mut generation.members {
            *m = template.clone();
        }
        generation.fitness = vec![Some(1.0); 6];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let next = evolve_step(&generation, &space, &config, &mut rng);
        assert!(next.members.iter().all(|m| *m == template));
    }

    #[test]
    fn survivors_beat_discarded() {
        let space = surrogate_space();
        let config = GaConfig {
            population: 8,
            survivors: 4,
            ..GaConfig::default()
        };
        let mut generation = init_generation(&space, &config).unwrap();
        for (i, f) in generation.fitness.iter_mut().enumerate() {
            *f = Some((8 - i) as f64);
        }
        let order = generation.ranking();
        let max_survivor = generation.fitness[order[3]].unwrap();
        let min_discarded = generation.fitness[order[4]].unwrap();
        assert!(max_survivor <= min_discarded);
    }

    #[test]
    fn full_mutation_stays_on_lattice() {
        let space = surrogate_space();
        let config = GaConfig {
            population: 10,
            survivors: 5,
            mutation_prob: 1.0,
            ..GaConfig::default()
        };
        let mut generation = init_generation(&space, &config).unwrap();
        generation.fitness = (0..10).map(|i| Some(i as f64)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let next = evolve_step(&generation, &space, &config, &mut rng);
            for m in &next.members {
                for (g, p) in m.indices().iter().zip(&space.params) {
                    assert!((*g as usize) < p.lattice_size());
                }
            }
            generation.members = next.members;
            generation.fitness = (0..10).map(|i| Some(i as f64)).collect();
        }
    }

    #[test]
    fn optimize_finds_lattice_optimum_of_quadratic() {
        // Optimum 3.5 sits on the 0.5-step lattice.
        let space = surrogate_space();
        let config = GaConfig {
            population: 40,
            survivors: 20,
            tolerance: 1e-9,
            max_generations: 30,
            seed: 11,
            ..GaConfig::default()
        };
        let result = optimize(&space, &config, |c| {
            let x = c.values(&space)[0];
            Ok((x - 3.5) * (x - 3.5))
        })
        .unwrap();
        assert_eq!(result.best.values(&space)[0], 3.5);
        assert_eq!(result.best_fitness, 0.0);
    }

    #[test]
    fn single_generation_returns_initial_best() {
        let space = surrogate_space();
        let config = GaConfig {
            max_generations: 1,
            seed: 5,
            ..GaConfig::default()
        };
        let init = init_generation(&space, &config).unwrap();
        let result = optimize(&space, &config, |c| Ok(c.values(&space)[0])).unwrap();
        let expected = init
            .members
            .iter()
            .map(|c| c.values(&space)[0])
            .fold(f64::INFINITY, f64::min);
        assert_eq!(result.best_fitness, expected);
        assert_eq!(result.history.len(), 1);
    }

    #[test]
    fn history_is_non_increasing_across_seeds() {
        let space = surrogate_space();
        for seed in 0..50 {
            let config = GaConfig {
                seed,
                tolerance: 1e-12,
                max_generations: 15,
                ..GaConfig::default()
            };
            let result = optimize(&space, &config, |c| {
                let x = c.values(&space)[0];
                Ok((x - 7.0).abs())
            })
            .unwrap();
            for pair in result.history.windows(2) {
                assert!(pair[1].best <= pair[0].best);
            }
        }
    }

    #[test]
    fn optimize_is_deterministic() {
        let space = surrogate_space();
        let config = GaConfig {
            seed: 21,
            tolerance: 1e-12,
            ..GaConfig::default()
        };
        let run = || {
            optimize(&space, &config, |c| {
                let x = c.values(&space)[0];
                Ok((x - 2.0) * (x - 2.0) + 1.0)
            })
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.best, b.best);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn cv_fitness_zero_for_constant_labels() {
        use crate::market::{EventKey, FiscalQuarter};
        let rows: Vec<Vec<Option<f64>>> = (0..12).map(|i| vec![Some(i as f64)]).collect();
        let keys: Vec<EventKey> = (0..12)
            .map(|i| EventKey {
                company: format!("C{i}").as_str().into(),
                quarter: FiscalQuarter::new(2018, 1).unwrap(),
            })
            .collect();
        let matrix = FeatureMatrix::from_rows(keys, vec!["x".into()], rows);
        let labels = vec![4.0; 12];
        let config = TrainConfig {
            rounds: 5,
            ..TrainConfig::default()
        };
        let fit = cv_fitness(&matrix, &labels, &config, 3, LossKind::SquaredError, 1).unwrap();
        assert!(fit.abs() < 1e-12);
    }

    #[test]
    fn fold_partition_sizes() {
        let folds = fold_indices(10, 2, 7);
        assert_eq!(folds.len(), 2);
        assert_eq!(folds[0].len(), 5);
        assert_eq!(folds[1].len(), 5);
        let mut all: Vec<usize> = folds.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());

        let folds = fold_indices(11, 3, 7);
        let sizes: Vec<usize> = folds.iter().map(|f| f.len()).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
    }

    #[test]
    fn too_few_rows_for_cv() {
        use crate::market::{EventKey, FiscalQuarter};
        let matrix = FeatureMatrix::<f64>::from_rows(
            vec![EventKey {
                company: "A".into(),
                quarter: FiscalQuarter::new(2018, 1).unwrap(),
            }],
            vec!["x".into()],
            vec![vec![Some(1.0)]],
        );
        let config = TrainConfig::default();
        assert!(matches!(
            cv_fitness(&matrix, &[1.0], &config, 5, LossKind::SquaredError, 0),
            Err(GaError::TooFewRows { .. })
        ));
    }
}
