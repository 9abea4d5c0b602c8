//! Genetic search over the CPG gains, biases, time scale and feedback gain.
//! Prints the best fitness per generation and the winning genes.
//!
//! cargo run --release --example optimize_gait -- [population] [generations] [seed]

use biped_cpg::ga::{evolve, Chromosome, GaConfig, GENE_NAMES};
use biped_cpg::network::CpgNetworkConfig;
use biped_cpg::plant::PlantConfig;

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args()
        .nth(i)
        .and_then(|s| s.parse().ok())
        .unwrap_or(default)
}

fn main() -> biped_cpg::Result<()> {
    let config = GaConfig {
        population: arg(1, 20),
        generations: arg(2, 10),
        ..GaConfig::default()
    };
    let seed = arg(3, 0u64);
    let base = CpgNetworkConfig::default();
    let outcome = evolve(&config, &base, PlantConfig::default(), seed, |s| {
        println!(
            "gen {:>3}  best {:>8.3}  mean {:>8.3}  std {:>7.3}",
            s.generation, s.best, s.mean, s.std
        );
        Ok(())
    })?;
    let reference = Chromosome::best_known();
    println!("\n{:<6} {:>9} {:>10}", "gene", "found", "reference");
    for (i, name) in GENE_NAMES.iter().enumerate() {
        println!(
            "{name:<6} {:>9.4} {:>10.4}",
            outcome.best.0[i], reference.0[i]
        );
    }
    Ok(())
}
