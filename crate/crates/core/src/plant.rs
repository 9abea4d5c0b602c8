//! Surrogate gait plant.
//!
//! Each sagittal hip's stride amplitude is tracked cycle by cycle. The mean
//! stride sets forward speed and the left/right stride imbalance sets the
//! yaw rate; the torso then moves as a unicycle. Roll follows the frontal
//! joints, pitch follows the sagittal hips plus a slow drift driven by the
//! mean posture lean. Joint tracking is ideal.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Joint, JointCommands, NUM_JOINTS};

/// Limit on |alpha| and |beta| before the robot counts as fallen.
pub const TILT_LIMIT: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TorsoState {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha_dot: f64,
    pub beta_dot: f64,
    pub gamma_dot: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub x_dot: f64,
    pub y_dot: f64,
    pub z_dot: f64,
}

impl TorsoState {
    pub fn to_array(&self) -> [f64; 12] {
        [
            self.alpha,
            self.beta,
            self.gamma,
            self.alpha_dot,
            self.beta_dot,
            self.gamma_dot,
            self.x,
            self.y,
            self.z,
            self.x_dot,
            self.y_dot,
            self.z_dot,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    /// Stride efficiency of the left leg.
    pub eta_l: f64,
    /// Stride efficiency of the right leg.
    pub eta_r: f64,
    /// Forward speed per radian of mean hip amplitude (m/s/rad).
    pub c_v: f64,
    /// Yaw rate per radian of stride imbalance (rad/s/rad). Negative values
    /// turn away from the longer stride.
    pub c_turn: f64,
    /// Standard deviation of the per-tick yaw-rate slip noise (rad/s).
    pub slip_noise_sigma: f64,
    /// Largest stable sagittal hip amplitude (rad).
    pub hip_amplitude_limit: f64,
    /// Largest stable mean posture lean (rad).
    pub lean_limit: f64,
    /// Lean below which posture causes no pitch drift (rad).
    pub lean_deadband: f64,
    /// Pitch drift rate per radian of lean beyond the deadband (1/s).
    pub c_lean: f64,
    /// Roll per radian of frontal joint swing.
    pub c_roll: f64,
    /// Pitch per radian of sagittal hip split.
    pub c_pitch: f64,
    /// Time constant of the posture estimate (s).
    pub posture_tau: f64,
    /// A hip with no completed cycle for this long has zero amplitude (s).
    pub cycle_timeout: f64,
    /// Nominal torso height (m).
    pub z0: f64,
    pub seed: u64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            eta_l: 1.0,
            eta_r: 0.97,
            c_v: 1.5,
            c_turn: -1.0,
            slip_noise_sigma: 0.02,
            hip_amplitude_limit: 0.25,
            lean_limit: 0.4,
            lean_deadband: 0.02,
            c_lean: 1.0,
            c_roll: 3.0,
            c_pitch: 0.1,
            posture_tau: 2.0,
            cycle_timeout: 6.0,
            z0: 0.55,
            seed: 0,
        }
    }
}

impl PlantConfig {
    /// A plant with equal legs and no slip noise.
    pub fn symmetric() -> Self {
        PlantConfig {
            eta_r: 1.0,
            slip_noise_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.eta_l,
            self.eta_r,
            self.c_v,
            self.c_turn,
            self.slip_noise_sigma,
            self.hip_amplitude_limit,
            self.lean_limit,
            self.lean_deadband,
            self.c_lean,
            self.c_roll,
            self.c_pitch,
            self.posture_tau,
            self.cycle_timeout,
            self.z0,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("plant parameters must be finite".into()));
        }
        for (name, eta) in [("eta_l", self.eta_l), ("eta_r", self.eta_r)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::Config(format!(
                    "{name} must lie in (0, 1], got {eta}"
                )));
            }
        }
        if self.c_v <= 0.0 || self.c_turn == 0.0 {
            return Err(Error::Config(
                "c_v must be positive and c_turn nonzero".into(),
            ));
        }
        if self.slip_noise_sigma < 0.0 {
            return Err(Error::Config("slip_noise_sigma must be >= 0".into()));
        }
        if self.hip_amplitude_limit <= 0.0
            || self.lean_limit <= 0.0
            || self.lean_deadband < 0.0
            || self.c_lean < 0.0
            || self.posture_tau <= 0.0
            || self.cycle_timeout <= 0.0
            || self.z0 < 0.0
        {
            return Err(Error::Config(
                "plant envelope parameters out of range".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub d_x: f64,
    pub d_y: f64,
    pub gamma_final: f64,
    pub t_up: f64,
    pub fell: bool,
}

/// Half peak-to-peak amplitude of the most recent complete cycle, with
/// cycles delimited by upward crossings of the previous cycle's midline.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleTracker {
    center: Option<f64>,
    below: bool,
    seen_crossing: bool,
    min: f64,
    max: f64,
    since_crossing: f64,
    amplitude: f64,
    timeout: f64,
}

impl CycleTracker {
    pub fn new(timeout: f64) -> Self {
        CycleTracker {
            center: None,
            below: false,
            seen_crossing: false,
            min: 0.0,
            max: 0.0,
            since_crossing: 0.0,
            amplitude: 0.0,
            timeout,
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn update(&mut self, value: f64, dt: f64) {
        let Some(center) = self.center else {
            self.center = Some(value);
            self.min = value;
            self.max = value;
            return;
        };
        self.min = self.min.min(value);
        self.max = self.max.max(value);
        self.since_crossing += dt;
        if value < center {
            self.below = true;
        } else if self.below {
            if self.seen_crossing {
                self.amplitude = 0.5 * (self.max - self.min);
            }
            self.seen_crossing = true;
            self.restart(value);
            return;
        }
        if self.since_crossing > self.timeout {
            self.amplitude = 0.0;
            self.seen_crossing = false;
            self.restart(value);
        }
    }

    fn restart(&mut self, value: f64) {
        self.center = Some(0.5 * (self.max + self.min));
        self.min = value;
        self.max = value;
        self.below = false;
        self.since_crossing = 0.0;
    }
}

/// Mean sagittal lean of a posture: hip + knee/2 + ankle + shoulder/4,
/// averaged over both sides.
pub fn posture_lean(angles: &[f64; NUM_JOINTS]) -> f64 {
    use Joint::*;
    let side = |hip: Joint, knee: Joint, ankle: Joint, shoulder: Joint| {
        angles[hip.index()]
            + 0.5 * angles[knee.index()]
            + angles[ankle.index()]
            + 0.25 * angles[shoulder.index()]
    };
    0.5 * (side(HipSagittalLeft, KneeLeft, AnkleSagittalLeft, ShoulderLeft)
        + side(
            HipSagittalRight,
            KneeRight,
            AnkleSagittalRight,
            ShoulderRight,
        ))
}

fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    } else if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone)]
pub struct GaitPlant {
    config: PlantConfig,
    state: TorsoState,
    trackers: [CycleTracker; 2],
    posture: Option<[f64; NUM_JOINTS]>,
    pitch_drift: f64,
    hip_angles: (f64, f64),
    time: f64,
    t_up: f64,
    fallen: bool,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl GaitPlant {
    pub fn new(config: PlantConfig) -> Result<Self> {
        config.validate()?;
        let noise = if config.slip_noise_sigma > 0.0 {
            Some(
                Normal::new(0.0, config.slip_noise_sigma)
                    .map_err(|e| Error::Config(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(GaitPlant {
            config,
            state: TorsoState {
                z: config.z0,
                ..TorsoState::default()
            },
            trackers: [
                CycleTracker::new(config.cycle_timeout),
                CycleTracker::new(config.cycle_timeout),
            ],
            posture: None,
            pitch_drift: 0.0,
            hip_angles: (0.0, 0.0),
            time: 0.0,
            t_up: 0.0,
            fallen: false,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            noise,
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Current stride amplitude estimates (left, right), in rad.
    pub fn hip_amplitudes(&self) -> (f64, f64) {
        (self.trackers[0].amplitude(), self.trackers[1].amplitude())
    }

    /// Sagittal hip angles reported back to the CPG network.
    pub fn measured_hip_angles(&self) -> (f64, f64) {
        self.hip_angles
    }

    /// Mean posture lean estimated so far (rad).
    pub fn lean(&self) -> f64 {
        self.posture.as_ref().map_or(0.0, posture_lean)
    }

    /// Advances the plant by `dt` under the given joint targets. Once fallen
    /// the plant is frozen.
    pub fn step(&mut self, commands: &JointCommands, dt: f64) -> Result<TorsoState> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParam(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if self.fallen {
            return Ok(self.state);
        }
        let cfg = self.config;
        let angles: [f64; NUM_JOINTS] = commands.map(|c| c.theta);
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::Divergence("non-finite joint command".into()));
        }
        let theta_l = angles[Joint::HipSagittalLeft.index()];
        let theta_r = angles[Joint::HipSagittalRight.index()];
        self.hip_angles = (theta_l, theta_r);
        self.trackers[0].update(theta_l, dt);
        self.trackers[1].update(theta_r, dt);

        let blend = (dt / cfg.posture_tau).min(1.0);
        let posture = self.posture.get_or_insert(angles);
        for (p, a) in posture.iter_mut().zip(angles) {
            *p += blend * (a - *p);
        }
        let lean = posture_lean(posture);

        let (a_l, a_r) = self.hip_amplitudes();
        let (s_l, s_r) = (a_l * cfg.eta_l, a_r * cfg.eta_r);
        let noise = self.noise.map_or(0.0, |n| n.sample(&mut self.rng));
        let gamma_dot = cfg.c_turn * (s_r - s_l) + noise;
        let v = cfg.c_v * 0.5 * (s_l + s_r);

        let prev = self.state;
        let gamma = wrap_angle(prev.gamma + gamma_dot * dt);
        let (x_dot, y_dot) = (v * gamma.cos(), v * gamma.sin());

        let excess = (lean.abs() - cfg.lean_deadband).max(0.0);
        self.pitch_drift += cfg.c_lean * excess * lean.signum() * dt;
        let split = 0.5 * (theta_l - theta_r);
        let frontal = 0.5
            * (angles[Joint::HipFrontalLeft.index()] - angles[Joint::HipFrontalRight.index()])
            + 0.5
                * (angles[Joint::AnkleFrontalLeft.index()]
                    - angles[Joint::AnkleFrontalRight.index()]);
        let alpha = cfg.c_roll * frontal;
        let beta = self.pitch_drift + cfg.c_pitch * split;
        let z = cfg.z0 * split.cos();

        self.state = TorsoState {
            alpha,
            beta,
            gamma,
            alpha_dot: (alpha - prev.alpha) / dt,
            beta_dot: (beta - prev.beta) / dt,
            gamma_dot,
            x: prev.x + x_dot * dt,
            y: prev.y + y_dot * dt,
            z,
            x_dot,
            y_dot,
            z_dot: (z - prev.z) / dt,
        };
        self.time += dt;

        self.fallen = a_l > cfg.hip_amplitude_limit
            || a_r > cfg.hip_amplitude_limit
            || lean.abs() > cfg.lean_limit
            || alpha.abs() > TILT_LIMIT
            || beta.abs() > TILT_LIMIT;
        if !self.fallen {
            self.t_up += dt;
        }
        Ok(self.state)
    }

    pub fn is_fallen(&self) -> bool {
        self.fallen
    }

    pub fn observe(&self) -> TorsoState {
        self.state
    }

    pub fn metrics(&self) -> EpisodeMetrics {
        EpisodeMetrics {
            d_x: self.state.x,
            d_y: self.state.y,
            gamma_final: self.state.gamma,
            t_up: self.t_up,
            fell: self.fallen,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{zero_commands, JointCommand};

    fn hips(theta_l: f64, theta_r: f64) -> JointCommands {
        let mut c = zero_commands();
        c[Joint::HipSagittalLeft.index()] = JointCommand {
            joint: Joint::HipSagittalLeft,
            theta: theta_l,
        };
        c[Joint::HipSagittalRight.index()] = JointCommand {
            joint: Joint::HipSagittalRight,
            theta: theta_r,
        };
        c
    }

    #[test]
    fn initial_observation() {
        let plant = GaitPlant::new(PlantConfig::default()).unwrap();
        let obs = plant.observe().to_array();
        for (i, v) in obs.iter().enumerate() {
            if i == 8 {
                assert_eq!(*v, 0.55);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn tracker_measures_sine_amplitude() {
        let mut t = CycleTracker::new(5.0);
        let dt = 0.01;
        for i in 0..500 {
            t.update(0.1 + 0.3 * (i as f64 * dt * 2.0 * PI).sin(), dt);
        }
        assert!((t.amplitude() - 0.3).abs() < 1e-3, "{}", t.amplitude());
    }

    #[test]
    fn tracker_times_out_on_constant_signal() {
        let mut t = CycleTracker::new(1.0);
        for i in 0..300 {
            t.update((i as f64 * 0.1).sin(), 0.01);
        }
        assert!(t.amplitude() > 0.9);
        for _ in 0..200 {
            t.update(0.3, 0.01);
        }
        assert_eq!(t.amplitude(), 0.0);
    }

    #[test]
    fn wrap_keeps_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(GaitPlant::new(PlantConfig {
            eta_r: 0.0,
            ..PlantConfig::default()
        })
        .is_err());
        assert!(GaitPlant::new(PlantConfig {
            eta_l: 1.2,
            ..PlantConfig::default()
        })
        .is_err());
        assert!(GaitPlant::new(PlantConfig {
            slip_noise_sigma: -1.0,
            ..PlantConfig::default()
        })
        .is_err());
        assert!(GaitPlant::new(PlantConfig {
            c_v: 0.0,
            ..PlantConfig::default()
        })
        .is_err());
    }

    #[test]
    fn frozen_after_fall() {
        let mut plant = GaitPlant::new(PlantConfig::symmetric()).unwrap();
        let dt = 0.01;
        let mut i = 0;
        while !plant.is_fallen() {
            let s = (i as f64 * dt * 2.0 * PI).sin();
            plant.step(&hips(0.6 * s, -0.6 * s), dt).unwrap();
            i += 1;
            assert!(i < 1000);
        }
        let before = plant.observe();
        let t_up = plant.metrics().t_up;
        plant.step(&hips(0.0, 0.0), dt).unwrap();
        assert_eq!(plant.observe(), before);
        assert_eq!(plant.metrics().t_up, t_up);
        assert!(plant.metrics().t_up < 2.0);
    }
}
