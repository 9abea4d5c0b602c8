use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use biped_cpg::harness::{self, ExperimentConfig, Preset};
use biped_cpg::Result;

/// Log filter variable, e.g. `BIPED_CPG_LOG=debug`.
const LOG_ENV: &str = "BIPED_CPG_LOG";

#[derive(Parser)]
#[command(
    name = "biped-cpg",
    version,
    about = "CPG gait optimization, controller training and evaluation"
)]
struct Cli {
    /// TOML overrides on top of the preset, or a run manifest (.json) to replay.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value = "desk")]
    preset: PresetArg,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Search CPG parameters with the genetic optimizer.
    Optimize,
    /// Train a neural high-level controller.
    Train {
        #[arg(long)]
        setup: String,
    },
    /// Evaluate controllers; comma-separated names run concurrently.
    Test {
        #[arg(long, default_value = "S0")]
        setup: String,
    },
    /// Record one episode at full rate as JSON lines.
    Trace {
        #[arg(long, default_value = "S0")]
        setup: String,
    },
    /// Load and check the configuration without running anything.
    ValidateConfig,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let preset = match cli.preset {
        PresetArg::Desk => Preset::Desk,
        PresetArg::Paper => Preset::Paper,
    };
    let mut cfg = ExperimentConfig::load(preset, cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    match &cli.command {
        Command::Optimize => {
            let r = harness::cmd_optimize(&cfg)?;
            let first = r.outcome.history.first().map_or(f64::NAN, |s| s.best);
            println!(
                "best fitness {:.4} (generation 0: {first:.4})",
                r.outcome.best_fitness
            );
            println!("wrote {}", cfg.out_dir.join("best_network.toml").display());
        }
        Command::Train { setup } => {
            let r = harness::cmd_train(&cfg, setup)?;
            if let Some(last) = r.evals.last() {
                println!(
                    "{setup}: last eval reward {:.3}, d_x {:.3}, d_y {:.3}, gamma {:.3}",
                    last.eval_reward, last.d_x, last.d_y, last.gamma
                );
            }
            println!("actor sha256 {}", r.actor_checksum);
        }
        Command::Test { setup } => {
            let names: Vec<&str> = setup
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect();
            let reports = names
                .par_iter()
                .map(|n| harness::cmd_test(&cfg, n))
                .collect::<Result<Vec<_>>>()?;
            println!(
                "{:<8} {:>10} {:>12} {:>12} {:>6}",
                "setup", "median d_x", "median |d_y|", "median |gam|", "falls"
            );
            for (name, r) in names.iter().zip(&reports) {
                println!(
                    "{name:<8} {:>10.3} {:>12.3} {:>12.3} {:>6}",
                    r.summary[0].median, r.summary[1].median, r.summary[2].median, r.falls
                );
            }
        }
        Command::Trace { setup } => {
            let r = harness::cmd_trace(&cfg, setup)?;
            println!("{} ticks -> {}", r.ticks, r.path.display());
        }
        Command::ValidateConfig => {
            let net = cfg.network()?;
            println!(
                "config ok: seed {}, out {}",
                cfg.seed,
                cfg.out_dir.display()
            );
            println!("controllers: {}", cfg.controller_names().join(", "));
            println!(
                "network: {} couplings, kappa {}",
                net.couplings.len(),
                net.params.kappa
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
