//! Closed loop of CPG network and gait plant, plus the high-level
//! controllers that modulate it once per control period.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::highlevel::{linear_control, phi_to_psi, LinearControllerConfig};
use crate::mlp::Mlp;
use crate::network::{CpgNetwork, CpgNetworkConfig, HipModulation, JointCommands};
use crate::plant::{EpisodeMetrics, GaitPlant, PlantConfig, TorsoState};

/// Integration step of network and plant (100 Hz).
pub const TICK_DT: f64 = 0.01;

/// Number of ticks covering `seconds`.
pub fn ticks_for(seconds: f64) -> usize {
    (seconds / TICK_DT).round() as usize
}

/// A CPG network driving a gait plant, with angular feedback from the
/// plant's hip angles of the previous tick.
#[derive(Debug, Clone)]
pub struct Walker {
    pub network: CpgNetwork,
    pub plant: GaitPlant,
    commands: JointCommands,
}

impl Walker {
    pub fn new(network: &CpgNetworkConfig, plant: PlantConfig) -> Result<Self> {
        let network = CpgNetwork::new(network.clone())?;
        let commands = network.joint_commands(HipModulation::IDENTITY);
        Ok(Walker {
            network,
            plant: GaitPlant::new(plant)?,
            commands,
        })
    }

    pub fn commands(&self) -> &JointCommands {
        &self.commands
    }

    pub fn time(&self) -> f64 {
        self.plant.time()
    }

    /// One 100 Hz tick. Does nothing once the plant has fallen.
    pub fn tick(&mut self, hip_mod: HipModulation) -> Result<()> {
        if self.plant.is_fallen() {
            return Ok(());
        }
        let measured = self.plant.measured_hip_angles();
        self.commands = self.network.tick(hip_mod, measured, TICK_DT)?;
        self.plant.step(&self.commands, TICK_DT)?;
        Ok(())
    }

    /// Runs `ticks` ticks under fixed modulation, stopping early on a fall.
    pub fn run(&mut self, hip_mod: HipModulation, ticks: usize) -> Result<()> {
        for _ in 0..ticks {
            if self.plant.is_fallen() {
                break;
            }
            self.tick(hip_mod)?;
        }
        Ok(())
    }

    pub fn metrics(&self) -> EpisodeMetrics {
        self.plant.metrics()
    }
}

/// High-level controller applied once per control period.
#[derive(Debug, Clone)]
pub enum Controller {
    /// No modulation (setup S0).
    Unmodulated,
    Linear(LinearControllerConfig),
    Neural {
        actor: Mlp,
        xi: f64,
    },
}

impl Controller {
    /// Raw controller output `phi` for the current observation.
    pub fn phi(&self, obs: &TorsoState) -> Result<[f64; 2]> {
        match self {
            Controller::Unmodulated => Ok([0.0, 0.0]),
            Controller::Linear(cfg) => Ok(linear_control(obs.y, cfg)),
            Controller::Neural { actor, .. } => {
                let out = actor.forward_one(&obs.to_array())?;
                Ok([out[0], out[1]])
            }
        }
    }

    pub fn modulation(&self, obs: &TorsoState) -> Result<HipModulation> {
        match self {
            Controller::Unmodulated => Ok(HipModulation::IDENTITY),
            Controller::Linear(cfg) => phi_to_psi(self.phi(obs)?, cfg.xi),
            Controller::Neural { xi, .. } => phi_to_psi(self.phi(obs)?, *xi),
        }
    }
}

/// Episode timing shared by training, evaluation and testing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTiming {
    /// Episode length (s).
    pub duration: f64,
    /// Controller and reward period (s).
    pub control_period: f64,
}

impl Default for EpisodeTiming {
    fn default() -> Self {
        EpisodeTiming {
            duration: 40.0,
            control_period: 1.0,
        }
    }
}

impl EpisodeTiming {
    pub fn control_steps(&self) -> usize {
        (self.duration / self.control_period).round() as usize
    }

    pub fn ticks_per_step(&self) -> usize {
        ticks_for(self.control_period)
    }
}

/// Per-tick record handed to episode observers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: f64,
    pub torso: TorsoState,
    pub psi: HipModulation,
    pub commands: JointCommands,
}

/// Runs one controlled episode and returns its final metrics.
pub fn run_controlled_episode(
    network: &CpgNetworkConfig,
    plant: PlantConfig,
    controller: &Controller,
    timing: EpisodeTiming,
    mut observer: impl FnMut(&TickRecord),
) -> Result<EpisodeMetrics> {
    let mut walker = Walker::new(network, plant)?;
    for _ in 0..timing.control_steps() {
        if walker.plant.is_fallen() {
            break;
        }
        let psi = controller.modulation(&walker.plant.observe())?;
        for _ in 0..timing.ticks_per_step() {
            if walker.plant.is_fallen() {
                break;
            }
            walker.tick(psi)?;
            observer(&TickRecord {
                t: walker.time(),
                torso: walker.plant.observe(),
                psi,
                commands: *walker.commands(),
            });
        }
    }
    Ok(walker.metrics())
}
