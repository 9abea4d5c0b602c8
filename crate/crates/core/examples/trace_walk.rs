//! Records one S0 episode at the full 100 Hz rate and prints a coarse
//! summary of the torso path from the written JSON-lines trace.
//!
//! cargo run --example trace_walk -- [out_dir]

use std::path::PathBuf;

use biped_cpg::harness::{cmd_trace, read_trace, ExperimentConfig, Preset};
use biped_cpg::network::Joint;

fn main() -> biped_cpg::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| PathBuf::from("runs/trace"), PathBuf::from);
    let cfg = ExperimentConfig {
        out_dir: out,
        ..ExperimentConfig::preset(Preset::Desk)
    };
    let report = cmd_trace(&cfg, "S0")?;
    println!(
        "{} ticks written to {}",
        report.ticks,
        report.path.display()
    );
    println!(
        "{:>6} {:>8} {:>8} {:>8} {:>9} {:>9}",
        "t", "x", "y", "gamma", "hip L", "hip R"
    );
    for rec in read_trace(&report.path)?.iter().step_by(400) {
        println!(
            "{:>6.2} {:>8.3} {:>8.3} {:>8.3} {:>9.4} {:>9.4}",
            rec.t,
            rec.torso.x,
            rec.torso.y,
            rec.torso.gamma,
            rec.commands[Joint::HipSagittalLeft.index()].theta,
            rec.commands[Joint::HipSagittalRight.index()].theta
        );
    }
    Ok(())
}
