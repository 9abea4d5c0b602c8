use biped_cpg::ga::{
    crossover_at, evaluate, evolve, gaussian_mutate, next_generation, tournament,
    two_point_crossover, Chromosome, GaConfig, GENE_BOUNDS, NUM_GENES,
};
use biped_cpg::network::CpgNetworkConfig;
use biped_cpg::plant::PlantConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> GaConfig {
    GaConfig {
        population: 8,
        generations: 4,
        horizon: 8.0,
        ..GaConfig::default()
    }
}

fn ramp(offset: f64) -> Chromosome {
    let mut g = [0.0; NUM_GENES];
    for (i, x) in g.iter_mut().enumerate() {
        *x = offset + i as f64;
    }
    Chromosome(g)
}

#[test]
fn crossover_with_itself_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let c = Chromosome::random(&mut rng);
    for _ in 0..20 {
        let (x, y) = two_point_crossover(&c, &c, &mut rng);
        assert_eq!((x, y), (c, c));
    }
}

#[test]
fn crossover_swaps_the_segment_between_cuts() {
    let (a, b) = (ramp(0.0), ramp(100.0));
    let (x, y) = crossover_at(&a, &b, 3, 7);
    let ex = [
        0.0, 1.0, 2.0, 103.0, 104.0, 105.0, 106.0, 7.0, 8.0, 9.0, 10.0, 11.0,
    ];
    let ey = [
        100.0, 101.0, 102.0, 3.0, 4.0, 5.0, 6.0, 107.0, 108.0, 109.0, 110.0, 111.0,
    ];
    assert_eq!(x.0, ex);
    assert_eq!(y.0, ey);
}

#[test]
fn zero_gene_probability_leaves_chromosome_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = Chromosome::best_known();
    let mut m = c;
    gaussian_mutate(&mut m, 0.0, 0.5, &mut rng);
    assert_eq!(m, c);
}

#[test]
fn tournament_winners_beat_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let fitness: Vec<f64> = (0..30).map(|_| rng.random_range(-5.0..10.0)).collect();
    let mean = fitness.iter().sum::<f64>() / fitness.len() as f64;
    let draws = 20_000;
    let winners = (0..draws)
        .map(|_| fitness[tournament(&fitness, 3, &mut rng)])
        .sum::<f64>()
        / draws as f64;
    assert!(winners >= mean, "{winners} < {mean}");
}

#[test]
fn best_known_gait_beats_typical_random_gaits() {
    let base = CpgNetworkConfig::default();
    let plant = PlantConfig::default();
    let best = evaluate(&Chromosome::best_known(), &base, plant, 20.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut random: Vec<f64> = (0..50)
        .map(|_| evaluate(&Chromosome::random(&mut rng), &base, plant, 20.0).unwrap())
        .collect();
    random.sort_by(f64::total_cmp);
    assert!(
        best > random[25],
        "best known {best}, random median {}",
        random[25]
    );
}

#[test]
fn elite_keeps_best_fitness_non_decreasing() {
    let out = evolve(
        &small(),
        &CpgNetworkConfig::default(),
        PlantConfig::default(),
        5,
        |_| Ok(()),
    )
    .unwrap();
    assert_eq!(out.history.len(), 5);
    for w in out.history.windows(2) {
        assert!(w[1].best >= w[0].best, "{} -> {}", w[0].best, w[1].best);
    }
    assert_eq!(out.best_fitness, out.history.last().unwrap().best);
}

#[test]
fn same_seed_same_search() {
    let run = || {
        evolve(
            &small(),
            &CpgNetworkConfig::default(),
            PlantConfig::default(),
            6,
            |_| Ok(()),
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(a.population, b.population);
}

#[test]
fn empty_population_is_rejected() {
    let cfg = GaConfig {
        population: 0,
        ..small()
    };
    assert!(evolve(
        &cfg,
        &CpgNetworkConfig::default(),
        PlantConfig::default(),
        0,
        |_| Ok(())
    )
    .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn offspring_respect_gene_bounds(seed in any::<u64>(), std in 0.0..2.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = GaConfig { mutation_prob: 1.0, gene_mutation_prob: 0.5, mutation_std: std, ..small() };
        let pop: Vec<Chromosome> = (0..cfg.population).map(|_| Chromosome::random(&mut rng)).collect();
        let fitness: Vec<f64> = (0..cfg.population).map(|_| rng.random_range(0.0..1.0)).collect();
        for c in next_generation(&pop, &fitness, &cfg, &mut rng) {
            for (x, (lo, hi)) in c.0.iter().zip(GENE_BOUNDS) {
                prop_assert!(*x >= lo && *x <= hi);
            }
        }
    }

    #[test]
    fn population_size_is_preserved(seed in any::<u64>(), n in 1usize..40, elitism in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = GaConfig { population: n, elitism: elitism.min(n), ..small() };
        let pop: Vec<Chromosome> = (0..n).map(|_| Chromosome::random(&mut rng)).collect();
        let fitness: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let next = next_generation(&pop, &fitness, &cfg, &mut rng);
        prop_assert_eq!(next.len(), n);
    }
}
