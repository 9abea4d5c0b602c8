//! High-level modulation: converting controller outputs `phi` into hip gain
//! multipliers `psi`, and the linear lateral-deviation baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::HipModulation;

/// How far the high-level controller may pull `psi` below one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfluenceConfig {
    pub xi: f64,
}

impl InfluenceConfig {
    pub fn new(xi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::InvalidParam(format!(
                "xi must lie in [0, 1], got {xi}"
            )));
        }
        Ok(InfluenceConfig { xi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearControllerConfig {
    /// Gain per meter of lateral deviation.
    pub gain: f64,
    pub xi: f64,
}

impl LinearControllerConfig {
    pub const L1: LinearControllerConfig = LinearControllerConfig { gain: 0.2, xi: 0.1 };
    pub const L2: LinearControllerConfig = LinearControllerConfig { gain: 0.4, xi: 0.1 };

    pub fn validate(&self) -> Result<()> {
        if !(self.gain >= 0.0) || !self.gain.is_finite() {
            return Err(Error::InvalidParam(format!(
                "linear gain must be >= 0, got {}",
                self.gain
            )));
        }
        InfluenceConfig::new(self.xi).map(|_| ())
    }
}

/// `psi = 1 - (1 - xi) * phi` on each side.
pub fn phi_to_psi(phi: [f64; 2], xi: f64) -> Result<HipModulation> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::InvalidParam(format!(
            "xi must lie in [0, 1], got {xi}"
        )));
    }
    if phi.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParam(format!(
            "phi must lie in [0, 1]^2, got {phi:?}"
        )));
    }
    let convert = |p: f64| 1.0 - (1.0 - xi) * p;
    Ok(HipModulation {
        psi_l: convert(phi[0]),
        psi_r: convert(phi[1]),
    })
}

/// Proportional controller on lateral deviation: a positive `d_y` loads the
/// left side, a negative one the right side. Exactly zero deviation yields
/// no modulation.
pub fn linear_control(d_y: f64, config: &LinearControllerConfig) -> [f64; 2] {
    let magnitude = (config.gain * d_y.abs()).clamp(0.0, 1.0);
    if d_y > 0.0 {
        [magnitude, 0.0]
    } else if d_y < 0.0 {
        [0.0, magnitude]
    } else {
        [0.0, 0.0]
    }
}
