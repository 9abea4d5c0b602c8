//! Thirteen coupled Matsuoka oscillators driving twelve joints.
//!
//! CPG 0 is the pacemaker and drives no joint. Each remaining CPG drives one
//! joint; its output is scaled by a gain and shifted by a bias (sagittal
//! joints only). The two sagittal hip CPGs additionally receive angular
//! feedback and the high-level `psi` gain multipliers.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matsuoka::{self, OscillatorInputs, OscillatorParams, OscillatorState};

pub const NUM_CPGS: usize = 13;
pub const NUM_JOINTS: usize = 12;
pub const PACEMAKER: usize = 0;

/// The twelve driven joints, in CPG order (CPG index = joint index + 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    HipSagittalLeft,
    HipSagittalRight,
    HipFrontalLeft,
    HipFrontalRight,
    KneeLeft,
    KneeRight,
    AnkleSagittalLeft,
    AnkleSagittalRight,
    AnkleFrontalLeft,
    AnkleFrontalRight,
    ShoulderLeft,
    ShoulderRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    HipSagittal,
    HipFrontal,
    Knee,
    AnkleSagittal,
    AnkleFrontal,
    Shoulder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Joint {
    pub const ALL: [Joint; NUM_JOINTS] = [
        Joint::HipSagittalLeft,
        Joint::HipSagittalRight,
        Joint::HipFrontalLeft,
        Joint::HipFrontalRight,
        Joint::KneeLeft,
        Joint::KneeRight,
        Joint::AnkleSagittalLeft,
        Joint::AnkleSagittalRight,
        Joint::AnkleFrontalLeft,
        Joint::AnkleFrontalRight,
        Joint::ShoulderLeft,
        Joint::ShoulderRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn cpg(self) -> usize {
        self.index() + 1
    }

    pub fn from_cpg(cpg: usize) -> Option<Joint> {
        cpg.checked_sub(1).and_then(|i| Joint::ALL.get(i).copied())
    }

    pub fn kind(self) -> JointKind {
        use Joint::*;
        match self {
            HipSagittalLeft | HipSagittalRight => JointKind::HipSagittal,
            HipFrontalLeft | HipFrontalRight => JointKind::HipFrontal,
            KneeLeft | KneeRight => JointKind::Knee,
            AnkleSagittalLeft | AnkleSagittalRight => JointKind::AnkleSagittal,
            AnkleFrontalLeft | AnkleFrontalRight => JointKind::AnkleFrontal,
            ShoulderLeft | ShoulderRight => JointKind::Shoulder,
        }
    }

    pub fn side(self) -> Side {
        if self.index() % 2 == 0 {
            Side::Left
        } else {
            Side::Right
        }
    }

    pub fn mirror(self) -> Joint {
        Joint::ALL[self.index() ^ 1]
    }

    pub fn name(self) -> &'static str {
        use Joint::*;
        match self {
            HipSagittalLeft => "hip_sagittal_left",
            HipSagittalRight => "hip_sagittal_right",
            HipFrontalLeft => "hip_frontal_left",
            HipFrontalRight => "hip_frontal_right",
            KneeLeft => "knee_left",
            KneeRight => "knee_right",
            AnkleSagittalLeft => "ankle_sagittal_left",
            AnkleSagittalRight => "ankle_sagittal_right",
            AnkleFrontalLeft => "ankle_frontal_left",
            AnkleFrontalRight => "ankle_frontal_right",
            ShoulderLeft => "shoulder_left",
            ShoulderRight => "shoulder_right",
        }
    }
}

impl fmt::Display for Joint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl JointKind {
    pub const ALL: [JointKind; 6] = [
        JointKind::HipSagittal,
        JointKind::HipFrontal,
        JointKind::Knee,
        JointKind::AnkleSagittal,
        JointKind::AnkleFrontal,
        JointKind::Shoulder,
    ];

    pub fn is_frontal(self) -> bool {
        matches!(self, JointKind::HipFrontal | JointKind::AnkleFrontal)
    }

    /// Default (gain id, bias id), zero-based: g1 hip, g2 frontal hip,
    /// g3 frontal ankle, g4 knee, g5 sagittal ankle, g6 shoulder;
    /// b1 hip, b2 knee, b3 sagittal ankle, b4 shoulder.
    pub fn default_gain_bias(self) -> GainBias {
        let (gain, bias) = match self {
            JointKind::HipSagittal => (0, Some(0)),
            JointKind::HipFrontal => (1, None),
            JointKind::AnkleFrontal => (2, None),
            JointKind::Knee => (3, Some(1)),
            JointKind::AnkleSagittal => (4, Some(2)),
            JointKind::Shoulder => (5, Some(3)),
        };
        GainBias { gain, bias }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GainBias {
    pub gain: usize,
    pub bias: Option<usize>,
}

/// Sagittal hip gain multipliers set by the high-level controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HipModulation {
    pub psi_l: f64,
    pub psi_r: f64,
}

impl HipModulation {
    pub const IDENTITY: HipModulation = HipModulation {
        psi_l: 1.0,
        psi_r: 1.0,
    };

    pub fn new(psi_l: f64, psi_r: f64) -> Result<Self> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if !ok(psi_l) || !ok(psi_r) {
            return Err(Error::InvalidParam(format!(
                "psi values must lie in [0, 1], got ({psi_l}, {psi_r})"
            )));
        }
        Ok(HipModulation { psi_l, psi_r })
    }
}

impl Default for HipModulation {
    fn default() -> Self {
        Self::IDENTITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointCommand {
    pub joint: Joint,
    pub theta: f64,
}

pub type JointCommands = [JointCommand; NUM_JOINTS];

/// Commands for a network at rest: every joint at zero.
pub fn zero_commands() -> JointCommands {
    Joint::ALL.map(|joint| JointCommand { joint, theta: 0.0 })
}

/// One directed connection: CPG `to` receives `weight * u` of CPG `from`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub to: usize,
    pub from: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpgNetworkConfig {
    pub params: OscillatorParams,
    /// Gains g1..g6.
    pub gains: [f64; 6],
    /// Biases b1..b4 (rad).
    pub biases: [f64; 4],
    /// Angular feedback weight on the sagittal hip CPGs.
    pub feedback_weight: f64,
    pub pacemaker: usize,
    pub couplings: Vec<Coupling>,
    #[serde(default = "default_gain_bias_map")]
    pub gain_bias_map: Vec<(JointKind, GainBias)>,
    #[serde(default = "default_initial_state")]
    pub initial_state: OscillatorState,
}

fn default_gain_bias_map() -> Vec<(JointKind, GainBias)> {
    JointKind::ALL
        .iter()
        .map(|&k| (k, k.default_gain_bias()))
        .collect()
}

fn default_initial_state() -> OscillatorState {
    OscillatorState::DEFAULT_INITIAL
}

/// Gains and biases of the best walking solution found by the optimizer,
/// in chromosome order (g1..g6, b1..b4) plus kappa and k.
pub const BEST_KAPPA: f64 = 0.3178;
pub const BEST_GAINS: [f64; 6] = [0.3777, 0.0234, 0.0132, 0.4567, 0.2019, 0.3309];
pub const BEST_BIASES: [f64; 4] = [-0.0519, 0.0963, -0.1156, 0.4814];
pub const BEST_FEEDBACK: f64 = 1.5364;

/// Default 13-CPG wiring.
///
/// The pacemaker and both sagittal hips form a loop that sets the rhythm:
///
/// * pacemaker -> right sagittal hip (+1)
/// * right sagittal hip -> left sagittal hip (-1, anti-phase)
/// * left sagittal hip -> pacemaker (-1)
///
/// Every other CPG is driven by the left sagittal hip: +1 when it should
/// move in phase with that hip (left leg, right shoulder), -1 otherwise
/// (right leg, left shoulder). The shoulders also take the mirrored input
/// from the right sagittal hip, so each hip is in phase with the
/// contralateral shoulder.
pub fn default_couplings() -> Vec<Coupling> {
    use Joint::*;
    let hip_l = HipSagittalLeft.cpg();
    let hip_r = HipSagittalRight.cpg();
    let c = |to: Joint, from: usize, weight: f64| Coupling {
        to: to.cpg(),
        from,
        weight,
    };
    let mut couplings = vec![
        c(HipSagittalRight, PACEMAKER, 1.0),
        c(HipSagittalLeft, hip_r, -1.0),
        Coupling {
            to: PACEMAKER,
            from: hip_l,
            weight: -1.0,
        },
        c(ShoulderLeft, hip_r, 1.0),
        c(ShoulderRight, hip_r, -1.0),
    ];
    for joint in Joint::ALL {
        let in_phase_with_left_hip = match joint.kind() {
            JointKind::HipSagittal => continue,
            JointKind::Shoulder => joint.side() == Side::Right,
            _ => joint.side() == Side::Left,
        };
        couplings.push(c(
            joint,
            hip_l,
            if in_phase_with_left_hip { 1.0 } else { -1.0 },
        ));
    }
    couplings
}

/// The default topology carrying the best walking solution's parameters.
pub fn default_topology() -> CpgNetworkConfig {
    CpgNetworkConfig {
        params: OscillatorParams::WALKING.with_kappa(BEST_KAPPA),
        gains: BEST_GAINS,
        biases: BEST_BIASES,
        feedback_weight: BEST_FEEDBACK,
        pacemaker: PACEMAKER,
        couplings: default_couplings(),
        gain_bias_map: default_gain_bias_map(),
        initial_state: OscillatorState::DEFAULT_INITIAL,
    }
}

impl Default for CpgNetworkConfig {
    fn default() -> Self {
        default_topology()
    }
}

impl CpgNetworkConfig {
    /// Dense weight matrix, `w[to][from]`.
    pub fn weight_matrix(&self) -> [[f64; NUM_CPGS]; NUM_CPGS] {
        let mut w = [[0.0; NUM_CPGS]; NUM_CPGS];
        for c in &self.couplings {
            if c.to < NUM_CPGS && c.from < NUM_CPGS {
                w[c.to][c.from] += c.weight;
            }
        }
        w
    }

    /// Weight of the connection between two CPGs regardless of direction
    /// (`a <- b` takes precedence).
    pub fn connection(&self, a: usize, b: usize) -> f64 {
        let w = self.weight_matrix();
        if w[a][b] != 0.0 {
            w[a][b]
        } else {
            w[b][a]
        }
    }

    pub fn joint_connection(&self, a: Joint, b: Joint) -> f64 {
        self.connection(a.cpg(), b.cpg())
    }

    pub fn gain_bias(&self, kind: JointKind) -> GainBias {
        self.gain_bias_map
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, gb)| *gb)
            .unwrap_or_else(|| kind.default_gain_bias())
    }

    pub fn gain(&self, joint: Joint) -> f64 {
        self.gains[self.gain_bias(joint.kind()).gain]
    }

    pub fn bias(&self, joint: Joint) -> f64 {
        self.gain_bias(joint.kind())
            .bias
            .map_or(0.0, |b| self.biases[b])
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.pacemaker != PACEMAKER {
            return Err(Error::Config(format!(
                "pacemaker must be CPG {PACEMAKER}, got {}",
                self.pacemaker
            )));
        }
        if !self.feedback_weight.is_finite()
            || self
                .gains
                .iter()
                .chain(&self.biases)
                .any(|v| !v.is_finite())
        {
            return Err(Error::Config(
                "gains, biases and feedback weight must be finite".into(),
            ));
        }
        for c in &self.couplings {
            if c.to >= NUM_CPGS || c.from >= NUM_CPGS {
                return Err(Error::Config(format!(
                    "coupling {c:?} references a CPG >= {NUM_CPGS}"
                )));
            }
            if c.to == c.from {
                return Err(Error::Config(format!("self-coupling on CPG {}", c.to)));
            }
            if !c.weight.is_finite() {
                return Err(Error::Config(format!("non-finite coupling weight {c:?}")));
            }
        }
        for kind in JointKind::ALL {
            let gb = self.gain_bias(kind);
            if gb.gain >= self.gains.len() || gb.bias.is_some_and(|b| b >= self.biases.len()) {
                return Err(Error::Config(format!(
                    "{kind:?} maps to a missing gain/bias id"
                )));
            }
            if kind.is_frontal() && gb.bias.is_some() {
                return Err(Error::Config(format!(
                    "frontal joint kind {kind:?} must not carry a bias"
                )));
            }
        }
        let mut seen = Vec::new();
        for (k, _) in &self.gain_bias_map {
            if seen.contains(k) {
                return Err(Error::Config(format!(
                    "duplicate gain/bias entry for {k:?}"
                )));
            }
            seen.push(*k);
        }
        let unreachable = self.unreachable_cpgs();
        if !unreachable.is_empty() {
            return Err(Error::Config(format!(
                "CPGs {unreachable:?} are not reachable from the pacemaker"
            )));
        }
        Ok(())
    }

    /// CPGs with no directed path of nonzero couplings from the pacemaker.
    pub fn unreachable_cpgs(&self) -> Vec<usize> {
        let w = self.weight_matrix();
        let mut reached = [false; NUM_CPGS];
        reached[self.pacemaker.min(NUM_CPGS - 1)] = true;
        let mut queue = VecDeque::from([self.pacemaker.min(NUM_CPGS - 1)]);
        while let Some(from) = queue.pop_front() {
            for (to, row) in w.iter().enumerate() {
                if row[from] != 0.0 && !reached[to] {
                    reached[to] = true;
                    queue.push_back(to);
                }
            }
        }
        (0..NUM_CPGS).filter(|&i| !reached[i]).collect()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: CpgNetworkConfig =
            toml::from_str(s).map_err(|e| Error::Config(format!("network config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Copy with every coupling into or out of the pacemaker removed.
    pub fn with_pacemaker_isolated(&self) -> CpgNetworkConfig {
        let mut cfg = self.clone();
        cfg.couplings
            .retain(|c| c.to != self.pacemaker && c.from != self.pacemaker);
        cfg
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("network config: {e}")))
    }
}

/// Mutable network state: one oscillator per CPG.
#[derive(Debug, Clone, PartialEq)]
pub struct CpgNetwork {
    pub config: CpgNetworkConfig,
    weights: [[f64; NUM_CPGS]; NUM_CPGS],
    pub states: [OscillatorState; NUM_CPGS],
    pub time: f64,
}

impl CpgNetwork {
    pub fn new(config: CpgNetworkConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self::new_unchecked(config))
    }

    /// Builds a network without validating the configuration. Used for
    /// ablation studies where CPGs are deliberately disconnected.
    pub fn new_unchecked(config: CpgNetworkConfig) -> Self {
        let weights = config.weight_matrix();
        let states = [config.initial_state; NUM_CPGS];
        CpgNetwork {
            config,
            weights,
            states,
            time: 0.0,
        }
    }

    /// Output `o_i` of every CPG.
    pub fn outputs(&self) -> [f64; NUM_CPGS] {
        self.states.map(|s| matsuoka::output(&s))
    }

    /// Advances every oscillator by `dt` and returns the joint targets.
    ///
    /// Coupling uses the `u` values at the start of the tick; the measured
    /// sagittal hip angles (left, right) feed back into CPGs 1 and 2.
    pub fn tick(
        &mut self,
        hip_mod: HipModulation,
        measured_hip_angles: (f64, f64),
        dt: f64,
    ) -> Result<JointCommands> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParam(format!(
                "dt must be positive, got {dt}"
            )));
        }
        let (theta_l, theta_r) = measured_hip_angles;
        if !theta_l.is_finite() || !theta_r.is_finite() {
            return Err(Error::InvalidParam(
                "measured hip angles must be finite".into(),
            ));
        }
        let k = self.config.feedback_weight;
        let prev = self.states;
        for i in 0..NUM_CPGS {
            let mut inputs = OscillatorInputs::ZERO;
            for (j, s) in prev.iter().enumerate() {
                let w = self.weights[i][j];
                if w != 0.0 {
                    inputs.s_e += w * s.u_e;
                    inputs.s_f += w * s.u_f;
                }
            }
            let feedback = if i == Joint::HipSagittalLeft.cpg() {
                Some(theta_l)
            } else if i == Joint::HipSagittalRight.cpg() {
                Some(theta_r)
            } else {
                None
            };
            if let Some(theta) = feedback {
                inputs.f_e = k * theta;
                inputs.f_f = -k * theta;
            }
            self.states[i] = matsuoka::step(&prev[i], &self.config.params, &inputs, dt)?;
        }
        self.time += dt;
        Ok(self.joint_commands(hip_mod))
    }

    /// Maps the current oscillator outputs to joint angles.
    pub fn joint_commands(&self, hip_mod: HipModulation) -> JointCommands {
        let outputs = self.outputs();
        Joint::ALL.map(|joint| {
            let o = outputs[joint.cpg()];
            let psi = match joint {
                Joint::HipSagittalLeft => hip_mod.psi_l,
                Joint::HipSagittalRight => hip_mod.psi_r,
                _ => 1.0,
            };
            let raw = if joint.kind() == JointKind::HipSagittal {
                hip_angle(o, psi, self.config.gain(joint), self.config.bias(joint))
            } else {
                o * self.config.gain(joint) + self.config.bias(joint)
            };
            JointCommand {
                joint,
                theta: clamp_angle(joint, raw),
            }
        })
    }
}

/// Sagittal hip target `theta = o * psi * g1 + b1`.
#[inline]
pub fn hip_angle(output: f64, psi: f64, gain: f64, bias: f64) -> f64 {
    output * psi * gain + bias
}

fn clamp_angle(joint: Joint, theta: f64) -> f64 {
    use std::f64::consts::PI;
    if theta.abs() > PI {
        log::warn!("clamping {joint} target {theta:.4} rad to +/-pi");
        theta.clamp(-PI, PI)
    } else {
        theta
    }
}

/// Phase lag of `b` relative to `a`, in `[-pi, pi]`, from the peak of their
/// cross-correlation within one period. Samples before `transient_cut`
/// seconds are discarded.
pub fn phase_difference(a: &[f64], b: &[f64], dt: f64, transient_cut: f64) -> Result<f64> {
    use std::f64::consts::PI;
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let skip = ((transient_cut / dt).round() as usize).min(a.len());
    let centered = |s: &[f64]| {
        let mean = s.iter().sum::<f64>() / s.len().max(1) as f64;
        s.iter().map(|v| v - mean).collect::<Vec<_>>()
    };
    let a = centered(&a[skip..]);
    let b = centered(&b[skip..]);
    let amp = |s: &[f64]| s.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let (amp_a, amp_b) = (amp(&a), amp(&b));
    if amp_a < 1e-6 || amp_b < 1e-6 {
        return Err(Error::NotOscillating(amp_a.min(amp_b)));
    }
    let period = dominant_period(&a).ok_or(Error::NotOscillating(amp_a))?;
    let n = a.len();
    let half = period / 2.0;
    let max_lag = half.ceil() as isize + 1;
    if (max_lag as usize) * 2 >= n {
        return Err(Error::NotOscillating(amp_a));
    }
    let corr = |lag: isize| -> f64 {
        let mut acc = 0.0;
        let mut count = 0usize;
        for t in 0..n as isize {
            let u = t + lag;
            if u >= 0 && (u as usize) < n {
                acc += a[t as usize] * b[u as usize];
                count += 1;
            }
        }
        acc / count as f64
    };
    let values: Vec<(isize, f64)> = (-max_lag..=max_lag).map(|l| (l, corr(l))).collect();
    let (best_idx, _) = values
        .iter()
        .enumerate()
        .max_by(|x, y| x.1 .1.total_cmp(&y.1 .1))
        .expect("lag window is non-empty");
    let mut lag = values[best_idx].0 as f64;
    if best_idx > 0 && best_idx + 1 < values.len() {
        let (y0, y1, y2) = (
            values[best_idx - 1].1,
            values[best_idx].1,
            values[best_idx + 1].1,
        );
        let denom = y0 - 2.0 * y1 + y2;
        if denom.abs() > 1e-300 {
            lag += 0.5 * (y0 - y2) / denom;
        }
    }
    let mut phase = 2.0 * PI * lag / period;
    while phase > PI {
        phase -= 2.0 * PI;
    }
    while phase < -PI {
        phase += 2.0 * PI;
    }
    Ok(phase)
}

/// Period in samples from mean spacing of upward zero crossings.
pub fn dominant_period(centered: &[f64]) -> Option<f64> {
    let crossings: Vec<f64> = centered
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] < 0.0 && w[1] >= 0.0)
        .map(|(i, w)| i as f64 + (-w[0]) / (w[1] - w[0]))
        .collect();
    if crossings.len() < 2 {
        return None;
    }
    Some((crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64)
}

/// Runs a network with fixed modulation, feeding back its own commanded hip
/// angles, and records every joint angle.
pub fn record_joint_angles(
    config: &CpgNetworkConfig,
    hip_mod: HipModulation,
    dt: f64,
    duration: f64,
) -> Result<Vec<JointCommands>> {
    let mut out = Vec::new();
    run_self_fed(
        CpgNetwork::new(config.clone())?,
        hip_mod,
        dt,
        duration,
        |_, cmds| out.push(*cmds),
    )?;
    Ok(out)
}

/// Same loop as [`record_joint_angles`], recording the raw CPG outputs of an
/// already constructed network (which may be unvalidated).
pub fn record_outputs(
    net: CpgNetwork,
    hip_mod: HipModulation,
    dt: f64,
    duration: f64,
) -> Result<Vec<[f64; NUM_CPGS]>> {
    let mut out = Vec::new();
    run_self_fed(net, hip_mod, dt, duration, |net, _| out.push(net.outputs()))?;
    Ok(out)
}

fn run_self_fed(
    mut net: CpgNetwork,
    hip_mod: HipModulation,
    dt: f64,
    duration: f64,
    mut record: impl FnMut(&CpgNetwork, &JointCommands),
) -> Result<()> {
    let steps = (duration / dt).round() as usize;
    let mut last = net.joint_commands(hip_mod);
    for _ in 0..steps {
        let fb = (
            last[Joint::HipSagittalLeft.index()].theta,
            last[Joint::HipSagittalRight.index()].theta,
        );
        last = net.tick(hip_mod, fb, dt)?;
        record(&net, &last);
    }
    Ok(())
}

/// One CPG's column from a recording.
pub fn column(series: &[[f64; NUM_CPGS]], cpg: usize) -> Vec<f64> {
    series.iter().map(|row| row[cpg]).collect()
}
