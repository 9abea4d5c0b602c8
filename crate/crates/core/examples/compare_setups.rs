//! Runs the test protocol through the experiment harness: trains S3 at desk
//! scale unless a checkpoint already exists, then tests S0, L1, L2 and S3 on
//! the same episodes and prints the medians.
//!
//! cargo run --release --example compare_setups -- [out_dir]

use std::path::PathBuf;

use biped_cpg::harness::{cmd_test, cmd_train, ExperimentConfig, Preset};

fn main() -> biped_cpg::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| PathBuf::from("runs/compare"), PathBuf::from);
    let cfg = ExperimentConfig {
        out_dir: out,
        ..ExperimentConfig::preset(Preset::Desk)
    };
    if !cfg.actor_checkpoint("S3").exists() {
        println!("training S3 for {} episodes ...", cfg.ddpg.episodes);
        cmd_train(&cfg, "S3")?;
    }
    println!(
        "{:<4} {:>10} {:>12} {:>6}",
        "", "median d_x", "median |d_y|", "falls"
    );
    for name in ["S0", "L1", "L2", "S3"] {
        let r = cmd_test(&cfg, name)?;
        println!(
            "{name:<4} {:>10.3} {:>12.3} {:>6}",
            r.median_dx(),
            r.median_abs_dy(),
            r.falls
        );
    }
    println!("CSVs in {}", cfg.out_dir.display());
    Ok(())
}
