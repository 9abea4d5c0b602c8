//! Trains a neural high-level controller with DDPG on the asymmetric plant
//! and prints the evaluation log as it goes.
//!
//! cargo run --release --example train_controller -- [setup] [episodes] [seed]

use biped_cpg::ddpg::{train, DdpgConfig, RewardWeights};
use biped_cpg::network::CpgNetworkConfig;
use biped_cpg::plant::PlantConfig;

fn main() -> biped_cpg::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let setup = args.get(1).map_or("S3", String::as_str);
    let weights = match setup {
        "S1" => RewardWeights::S1,
        "S2" => RewardWeights::S2,
        "S3" => RewardWeights::S3,
        "S4" => RewardWeights::S4,
        other => {
            eprintln!("unknown setup {other}; expected S1..S4");
            std::process::exit(2);
        }
    };
    let episodes = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(150);
    let seed = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);
    let config = DdpgConfig {
        episodes,
        ..DdpgConfig::default()
    };

    println!(
        "{:>7} {:>9} {:>7} {:>7} {:>7}",
        "episode", "reward", "d_x", "d_y", "gamma"
    );
    let (agent, _) = train(
        &CpgNetworkConfig::default(),
        PlantConfig::default(),
        weights,
        config,
        seed,
        |_, _, row| {
            if let Some(r) = row {
                println!(
                    "{:>7} {:>9.3} {:>7.3} {:>7.3} {:>7.3}",
                    r.episode, r.eval_reward, r.d_x, r.d_y, r.gamma
                );
            }
            Ok(())
        },
    )?;
    let phi = agent.act(&[0.0; 12])?;
    println!(
        "policy at the start pose: phi = ({:.3}, {:.3})",
        phi[0], phi[1]
    );
    Ok(())
}
