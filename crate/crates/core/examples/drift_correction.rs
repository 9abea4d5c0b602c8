//! Open-loop drift of the asymmetric plant and what the linear lateral
//! controllers make of it, one noise-free episode each.
//!
//! cargo run --example drift_correction

use biped_cpg::highlevel::LinearControllerConfig;
use biped_cpg::network::CpgNetworkConfig;
use biped_cpg::plant::PlantConfig;
use biped_cpg::rollout::{run_controlled_episode, Controller, EpisodeTiming};

fn main() -> biped_cpg::Result<()> {
    let network = CpgNetworkConfig::default();
    let plant = PlantConfig {
        slip_noise_sigma: 0.0,
        ..PlantConfig::default()
    };
    let controllers = [
        ("S0", Controller::Unmodulated),
        ("L1", Controller::Linear(LinearControllerConfig::L1)),
        ("L2", Controller::Linear(LinearControllerConfig::L2)),
    ];
    println!("eta_l {} eta_r {}", plant.eta_l, plant.eta_r);
    println!(
        "{:<4} {:>8} {:>8} {:>8} {:>6}",
        "", "d_x", "d_y", "gamma", "fell"
    );
    for (name, ctl) in &controllers {
        let m = run_controlled_episode(&network, plant, ctl, EpisodeTiming::default(), |_| {})?;
        println!(
            "{name:<4} {:>8.3} {:>8.3} {:>8.3} {:>6}",
            m.d_x, m.d_y, m.gamma_final, m.fell
        );
    }
    Ok(())
}
