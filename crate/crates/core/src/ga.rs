//! Genetic search over the CPG network's free parameters.
//!
//! A chromosome holds twelve genes: `[kappa, g1..g6, b1..b4, k]`. Fitness is
//! the distance walked plus half the time spent upright over a fixed
//! horizon with unmodulated hips.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    CpgNetworkConfig, HipModulation, BEST_BIASES, BEST_FEEDBACK, BEST_GAINS, BEST_KAPPA,
};
use crate::plant::{EpisodeMetrics, PlantConfig};
use crate::rollout::{ticks_for, Walker};

pub const NUM_GENES: usize = 12;

/// Inclusive `(low, high)` per gene.
pub const GENE_BOUNDS: [(f64, f64); NUM_GENES] = [
    (0.2, 1.0),
    (0.01, 1.0),
    (0.01, 1.0),
    (0.01, 1.0),
    (0.01, 1.0),
    (0.01, 1.0),
    (0.01, 1.0),
    (-0.06, 0.0),
    (0.0, 0.5),
    (-0.5, 0.0),
    (0.0, 1.0),
    (-2.5, 2.5),
];

pub const GENE_NAMES: [&str; NUM_GENES] = [
    "kappa", "g1", "g2", "g3", "g4", "g5", "g6", "b1", "b2", "b3", "b4", "k",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chromosome(pub [f64; NUM_GENES]);

impl Chromosome {
    pub fn best_known() -> Self {
        let mut g = [0.0; NUM_GENES];
        g[0] = BEST_KAPPA;
        g[1..7].copy_from_slice(&BEST_GAINS);
        g[7..11].copy_from_slice(&BEST_BIASES);
        g[11] = BEST_FEEDBACK;
        Chromosome(g)
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        let mut g = [0.0; NUM_GENES];
        for (x, &(lo, hi)) in g.iter_mut().zip(&GENE_BOUNDS) {
            *x = rng.random_range(lo..=hi);
        }
        Chromosome(g)
    }

    pub fn kappa(&self) -> f64 {
        self.0[0]
    }

    pub fn gains(&self) -> [f64; 6] {
        self.0[1..7].try_into().expect("six gains")
    }

    pub fn biases(&self) -> [f64; 4] {
        self.0[7..11].try_into().expect("four biases")
    }

    pub fn feedback(&self) -> f64 {
        self.0[11]
    }

    pub fn in_bounds(&self) -> bool {
        self.0
            .iter()
            .zip(&GENE_BOUNDS)
            .all(|(x, &(lo, hi))| (lo..=hi).contains(x))
    }

    /// Clamps every gene into its bounds.
    pub fn repair(&mut self) {
        for (x, &(lo, hi)) in self.0.iter_mut().zip(&GENE_BOUNDS) {
            *x = x.clamp(lo, hi);
        }
    }

    /// `base` with this chromosome's kappa, gains, biases and feedback weight.
    pub fn apply(&self, base: &CpgNetworkConfig) -> CpgNetworkConfig {
        CpgNetworkConfig {
            params: base.params.with_kappa(self.kappa()),
            gains: self.gains(),
            biases: self.biases(),
            feedback_weight: self.feedback(),
            ..base.clone()
        }
    }

    pub fn from_config(config: &CpgNetworkConfig) -> Self {
        let mut g = [0.0; NUM_GENES];
        g[0] = config.params.kappa;
        g[1..7].copy_from_slice(&config.gains);
        g[7..11].copy_from_slice(&config.biases);
        g[11] = config.feedback_weight;
        Chromosome(g)
    }
}

/// `d_x + 0.5 * t_up`.
pub fn fitness_from_metrics(m: &EpisodeMetrics) -> f64 {
    m.d_x + 0.5 * m.t_up
}

/// Walks the chromosome's network for `horizon` seconds with unmodulated
/// hips. A diverging network scores the distance and upright time reached
/// before the divergence.
pub fn evaluate(
    chrom: &Chromosome,
    base: &CpgNetworkConfig,
    plant: PlantConfig,
    horizon: f64,
) -> Result<f64> {
    let config = chrom.apply(base);
    let mut walker = Walker::new(&config, plant)?;
    match walker.run(HipModulation::IDENTITY, ticks_for(horizon)) {
        Ok(()) => {}
        Err(Error::Divergence(msg)) => log::debug!("chromosome diverged: {msg}"),
        Err(e) => return Err(e),
    }
    Ok(fitness_from_metrics(&walker.metrics()))
}

/// Best of `size` uniformly drawn contestants (with replacement).
pub fn tournament(fitness: &[f64], size: usize, rng: &mut impl Rng) -> usize {
    let mut best = rng.random_range(0..fitness.len());
    for _ in 1..size {
        let i = rng.random_range(0..fitness.len());
        if fitness[i] > fitness[best] {
            best = i;
        }
    }
    best
}

/// Two-point crossover: genes with index in `lo..hi` are swapped.
pub fn crossover_at(
    a: &Chromosome,
    b: &Chromosome,
    lo: usize,
    hi: usize,
) -> (Chromosome, Chromosome) {
    let (mut x, mut y) = (*a, *b);
    for i in lo..hi.min(NUM_GENES) {
        std::mem::swap(&mut x.0[i], &mut y.0[i]);
    }
    (x, y)
}

/// Two-point crossover at random cut points `lo < hi`.
pub fn two_point_crossover(
    a: &Chromosome,
    b: &Chromosome,
    rng: &mut impl Rng,
) -> (Chromosome, Chromosome) {
    let p = rng.random_range(1..NUM_GENES);
    let mut q = rng.random_range(1..NUM_GENES - 1);
    if q >= p {
        q += 1;
    }
    crossover_at(a, b, p.min(q), p.max(q))
}

/// Adds `N(0, std)` to each gene with probability `gene_prob`, then clamps.
pub fn gaussian_mutate(c: &mut Chromosome, gene_prob: f64, std: f64, rng: &mut impl Rng) {
    let normal = Normal::new(0.0, std).expect("finite non-negative std");
    for x in c.0.iter_mut() {
        if rng.random_bool(gene_prob) {
            *x += normal.sample(rng);
        }
    }
    c.repair();
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_prob: f64,
    /// Probability that a chromosome is mutated at all.
    pub mutation_prob: f64,
    /// Per-gene mutation probability within a mutated chromosome.
    pub gene_mutation_prob: f64,
    /// Standard deviation of the gene perturbation.
    pub mutation_std: f64,
    pub elitism: usize,
    /// Evaluation horizon (s).
    pub horizon: f64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 200,
            generations: 30,
            tournament_size: 3,
            crossover_prob: 0.8,
            mutation_prob: 0.1,
            gene_mutation_prob: 0.05,
            mutation_std: 0.01,
            elitism: 1,
            horizon: 20.0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.population == 0 {
            return bad("population must be positive".into());
        }
        if self.tournament_size == 0 {
            return bad("tournament size must be positive".into());
        }
        if self.elitism > self.population {
            return bad(format!(
                "elitism {} exceeds population {}",
                self.elitism, self.population
            ));
        }
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
            ("gene_mutation_prob", self.gene_mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.mutation_std >= 0.0 && self.mutation_std.is_finite()) {
            return bad("mutation_std must be finite and >= 0".into());
        }
        if !(self.horizon > 0.0) {
            return bad("horizon must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
    pub std: f64,
    pub best_chromosome: Chromosome,
}

impl GenerationStats {
    fn from_population(generation: usize, pop: &[Chromosome], fitness: &[f64]) -> Self {
        let n = fitness.len() as f64;
        let mean = fitness.iter().sum::<f64>() / n;
        let var = fitness.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n;
        let i = argmax(fitness);
        GenerationStats {
            generation,
            best: fitness[i],
            mean,
            std: var.sqrt(),
            best_chromosome: pop[i],
        }
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub history: Vec<GenerationStats>,
    pub best: Chromosome,
    pub best_fitness: f64,
    pub population: Vec<Chromosome>,
}

fn evaluate_all(
    pop: &[Chromosome],
    base: &CpgNetworkConfig,
    plant: PlantConfig,
    horizon: f64,
) -> Result<Vec<f64>> {
    pop.par_iter()
        .map(|c| evaluate(c, base, plant, horizon))
        .collect()
}

/// Produces the next population: elites first, then tournament offspring.
pub fn next_generation(
    pop: &[Chromosome],
    fitness: &[f64],
    config: &GaConfig,
    rng: &mut impl Rng,
) -> Vec<Chromosome> {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    let mut next: Vec<Chromosome> = order.iter().take(config.elitism).map(|&i| pop[i]).collect();
    while next.len() < pop.len() {
        let a = pop[tournament(fitness, config.tournament_size, rng)];
        let b = pop[tournament(fitness, config.tournament_size, rng)];
        let (mut x, mut y) = if rng.random_bool(config.crossover_prob) {
            two_point_crossover(&a, &b, rng)
        } else {
            (a, b)
        };
        for child in [&mut x, &mut y] {
            if rng.random_bool(config.mutation_prob) {
                gaussian_mutate(child, config.gene_mutation_prob, config.mutation_std, rng);
            }
        }
        next.push(x);
        if next.len() < pop.len() {
            next.push(y);
        }
    }
    next
}

/// Runs the search. `on_generation` sees every generation's statistics,
/// starting with the random initial population as generation 0.
pub fn evolve(
    config: &GaConfig,
    base: &CpgNetworkConfig,
    plant: PlantConfig,
    seed: u64,
    mut on_generation: impl FnMut(&GenerationStats) -> Result<()>,
) -> Result<GaOutcome> {
    config.validate()?;
    base.validate()?;
    plant.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pop: Vec<Chromosome> = (0..config.population)
        .map(|_| Chromosome::random(&mut rng))
        .collect();
    let mut fitness = evaluate_all(&pop, base, plant, config.horizon)?;
    let mut history = Vec::with_capacity(config.generations + 1);
    for generation in 0..=config.generations {
        if generation > 0 {
            pop = next_generation(&pop, &fitness, config, &mut rng);
            fitness = evaluate_all(&pop, base, plant, config.horizon)?;
        }
        let stats = GenerationStats::from_population(generation, &pop, &fitness);
        log::info!(
            "generation {generation}: best {:.4} mean {:.4} std {:.4}",
            stats.best,
            stats.mean,
            stats.std
        );
        on_generation(&stats)?;
        history.push(stats);
    }
    let i = argmax(&fitness);
    Ok(GaOutcome {
        history,
        best: pop[i],
        best_fitness: fitness[i],
        population: pop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitness_arithmetic() {
        let full = EpisodeMetrics {
            d_x: 4.0,
            d_y: 0.0,
            gamma_final: 0.0,
            t_up: 20.0,
            fell: false,
        };
        assert!((fitness_from_metrics(&full) - 14.0).abs() < 1e-12);
        let fall = EpisodeMetrics {
            d_x: 0.4,
            t_up: 3.0,
            fell: true,
            ..full
        };
        assert!((fitness_from_metrics(&fall) - 1.9).abs() < 1e-12);
    }

    #[test]
    fn best_known_roundtrip() {
        let c = Chromosome::best_known();
        assert!(c.in_bounds());
        assert_eq!(
            Chromosome::from_config(&c.apply(&CpgNetworkConfig::default())),
            c
        );
    }

    #[test]
    fn repair_clamps() {
        let mut c = Chromosome([5.0; NUM_GENES]);
        c.repair();
        assert!(c.in_bounds());
        assert_eq!(c.0[7], 0.0);
        assert_eq!(c.0[11], 2.5);
    }

    #[test]
    fn config_errors() {
        assert!(GaConfig {
            population: 0,
            ..GaConfig::default()
        }
        .validate()
        .is_err());
        assert!(GaConfig {
            crossover_prob: 1.5,
            ..GaConfig::default()
        }
        .validate()
        .is_err());
        assert!(GaConfig {
            elitism: 300,
            ..GaConfig::default()
        }
        .validate()
        .is_err());
    }
}
