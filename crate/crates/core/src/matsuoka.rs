//! Generalized Matsuoka oscillator: an extensor/flexor neuron pair with
//! self-inhibition, integrated with fixed-step RK4.
//!
//! Every derivative carries the same `1/kappa` factor, so `kappa` rescales
//! time uniformly and sets the oscillation frequency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest step accepted by [`step`].
pub const MAX_DT: f64 = 0.02;

/// Magnitude beyond which a state component is treated as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Dynamics constants shared by every CPG in the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    pub tau0: f64,
    pub tau0_prime: f64,
    pub beta: f64,
    pub w0: f64,
    pub ut: f64,
    pub kappa: f64,
}

impl OscillatorParams {
    /// Internal constants of the optimized walking network, with the
    /// optimized frequency factor.
    pub const WALKING: OscillatorParams = OscillatorParams {
        tau0: 0.28,
        tau0_prime: 0.4977,
        beta: 2.5,
        w0: 2.2829,
        ut: 0.4111,
        kappa: 0.3178,
    };

    pub fn with_kappa(self, kappa: f64) -> Self {
        OscillatorParams { kappa, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.tau0,
            self.tau0_prime,
            self.beta,
            self.w0,
            self.ut,
            self.kappa,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParam(
                "oscillator params must be finite".into(),
            ));
        }
        if self.tau0 <= 0.0 || self.tau0_prime <= 0.0 || self.kappa <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "tau0, tau0_prime and kappa must be positive (got {}, {}, {})",
                self.tau0, self.tau0_prime, self.kappa
            )));
        }
        if self.beta < 0.0 || self.w0 < 0.0 || self.ut < 0.0 {
            return Err(Error::InvalidParam(format!(
                "beta, w0 and ut must be non-negative (got {}, {}, {})",
                self.beta, self.w0, self.ut
            )));
        }
        Ok(())
    }
}

impl Default for OscillatorParams {
    fn default() -> Self {
        Self::WALKING
    }
}

/// Oscillator state, also used to carry its time-derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OscillatorState {
    pub u_e: f64,
    pub u_f: f64,
    pub v_e: f64,
    pub v_f: f64,
}

impl OscillatorState {
    /// Asymmetric start that breaks the symmetric equilibrium.
    pub const DEFAULT_INITIAL: OscillatorState = OscillatorState {
        u_e: 0.1,
        u_f: -0.1,
        v_e: 0.0,
        v_f: 0.0,
    };

    pub const ZERO: OscillatorState = OscillatorState {
        u_e: 0.0,
        u_f: 0.0,
        v_e: 0.0,
        v_f: 0.0,
    };

    pub fn to_array(self) -> [f64; 4] {
        [self.u_e, self.u_f, self.v_e, self.v_f]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        OscillatorState {
            u_e: a[0],
            u_f: a[1],
            v_e: a[2],
            v_f: a[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    fn axpy(self, h: f64, rate: OscillatorState) -> Self {
        OscillatorState {
            u_e: self.u_e + h * rate.u_e,
            u_f: self.u_f + h * rate.u_f,
            v_e: self.v_e + h * rate.v_e,
            v_f: self.v_f + h * rate.v_f,
        }
    }
}

/// Feedback (`f_*`) and coupling (`s_*`) terms entering each neuron.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OscillatorInputs {
    pub f_e: f64,
    pub f_f: f64,
    pub s_e: f64,
    pub s_f: f64,
}

impl OscillatorInputs {
    pub const ZERO: OscillatorInputs = OscillatorInputs {
        f_e: 0.0,
        f_f: 0.0,
        s_e: 0.0,
        s_f: 0.0,
    };

    fn is_finite(&self) -> bool {
        [self.f_e, self.f_f, self.s_e, self.s_f]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[inline]
fn rectify(u: f64) -> f64 {
    u.max(0.0)
}

/// Time-derivatives of the four state variables.
pub fn derivatives(
    state: &OscillatorState,
    params: &OscillatorParams,
    inputs: &OscillatorInputs,
) -> Result<OscillatorState> {
    if !state.is_finite() {
        return Err(Error::Divergence(format!(
            "non-finite oscillator state {state:?}"
        )));
    }
    if !inputs.is_finite() {
        return Err(Error::Divergence(format!(
            "non-finite oscillator inputs {inputs:?}"
        )));
    }
    Ok(raw_derivatives(state, params, inputs))
}

#[inline]
fn raw_derivatives(
    state: &OscillatorState,
    params: &OscillatorParams,
    inputs: &OscillatorInputs,
) -> OscillatorState {
    let y_e = rectify(state.u_e);
    let y_f = rectify(state.u_f);
    let fast = params.tau0 * params.kappa;
    let slow = params.tau0_prime * params.kappa;
    OscillatorState {
        u_e: (-state.u_e - params.w0 * y_f - params.beta * state.v_e
            + params.ut
            + inputs.f_e
            + inputs.s_e)
            / fast,
        u_f: (-state.u_f - params.w0 * y_e - params.beta * state.v_f
            + params.ut
            + inputs.f_f
            + inputs.s_f)
            / fast,
        v_e: (-state.v_e + y_e) / slow,
        v_f: (-state.v_f + y_f) / slow,
    }
}

/// Oscillator output `o = -y_e + y_f`.
#[inline]
pub fn output(state: &OscillatorState) -> f64 {
    -rectify(state.u_e) + rectify(state.u_f)
}

/// One classical RK4 step with inputs held constant across the step.
pub fn step(
    state: &OscillatorState,
    params: &OscillatorParams,
    inputs: &OscillatorInputs,
    dt: f64,
) -> Result<OscillatorState> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::InvalidParam(format!(
            "dt must be in (0, {MAX_DT}], got {dt}"
        )));
    }
    let k1 = derivatives(state, params, inputs)?;
    let k2 = raw_derivatives(&state.axpy(0.5 * dt, k1), params, inputs);
    let k3 = raw_derivatives(&state.axpy(0.5 * dt, k2), params, inputs);
    let k4 = raw_derivatives(&state.axpy(dt, k3), params, inputs);
    let next = OscillatorState {
        u_e: state.u_e + dt / 6.0 * (k1.u_e + 2.0 * k2.u_e + 2.0 * k3.u_e + k4.u_e),
        u_f: state.u_f + dt / 6.0 * (k1.u_f + 2.0 * k2.u_f + 2.0 * k3.u_f + k4.u_f),
        v_e: state.v_e + dt / 6.0 * (k1.v_e + 2.0 * k2.v_e + 2.0 * k3.v_e + k4.v_e),
        v_f: state.v_f + dt / 6.0 * (k1.v_f + 2.0 * k2.v_f + 2.0 * k3.v_f + k4.v_f),
    };
    check_bounded(&next)?;
    Ok(next)
}

pub(crate) fn check_bounded(state: &OscillatorState) -> Result<()> {
    if state
        .to_array()
        .iter()
        .all(|v| v.is_finite() && v.abs() <= DIVERGENCE_LIMIT)
    {
        Ok(())
    } else {
        Err(Error::Divergence(format!(
            "oscillator state left |x| <= {DIVERGENCE_LIMIT}: {state:?}"
        )))
    }
}

/// Integrates a free-running oscillator for `duration` seconds and returns
/// the output sampled after every step.
pub fn simulate_output(
    initial: OscillatorState,
    params: &OscillatorParams,
    dt: f64,
    duration: f64,
) -> Result<Vec<f64>> {
    let steps = (duration / dt).round() as usize;
    let mut state = initial;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        state = step(&state, params, &OscillatorInputs::ZERO, dt)?;
        out.push(output(&state));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn euler_oracle(
        mut s: [f64; 4],
        p: &OscillatorParams,
        inp: &OscillatorInputs,
        dt: f64,
        substeps: usize,
    ) -> [f64; 4] {
        // One line per term, written straight from the neuron equations.
        let h = dt / substeps as f64;
        for _ in 0..substeps {
            let ye = if s[0] > 0.0 { s[0] } else { 0.0 };
            let yf = if s[1] > 0.0 { s[1] } else { 0.0 };
            let due =
                (-s[0] - p.w0 * yf - p.beta * s[2] + p.ut + inp.f_e + inp.s_e) / (p.tau0 * p.kappa);
            let duf =
                (-s[1] - p.w0 * ye - p.beta * s[3] + p.ut + inp.f_f + inp.s_f) / (p.tau0 * p.kappa);
            let dve = (-s[2] + ye) / (p.tau0_prime * p.kappa);
            let dvf = (-s[3] + yf) / (p.tau0_prime * p.kappa);
            s = [
                s[0] + h * due,
                s[1] + h * duf,
                s[2] + h * dve,
                s[3] + h * dvf,
            ];
        }
        s
    }

    #[test]
    fn origin_is_equilibrium_without_tonic_input() {
        let p = OscillatorParams {
            ut: 0.0,
            ..OscillatorParams::WALKING
        };
        let d = derivatives(&OscillatorState::ZERO, &p, &OscillatorInputs::ZERO).unwrap();
        assert_eq!(d, OscillatorState::ZERO);
        let s = step(&OscillatorState::ZERO, &p, &OscillatorInputs::ZERO, 0.01).unwrap();
        assert_eq!(s, OscillatorState::ZERO);
    }

    #[test]
    fn tonic_input_drives_both_neurons_equally() {
        let p = OscillatorParams::WALKING.with_kappa(1.0);
        let d = derivatives(&OscillatorState::ZERO, &p, &OscillatorInputs::ZERO).unwrap();
        assert_relative_eq!(d.u_e, 0.4111 / 0.28, epsilon = 1e-12);
        assert_relative_eq!(d.u_f, 0.4111 / 0.28, epsilon = 1e-12);
        assert_eq!(d.v_e, 0.0);
        assert_eq!(d.v_f, 0.0);
    }

    #[test]
    fn derivatives_match_term_by_term_oracle() {
        let p = OscillatorParams::WALKING;
        let s = OscillatorState {
            u_e: 0.5,
            u_f: -0.2,
            v_e: 0.1,
            v_f: 0.0,
        };
        let d = derivatives(&s, &p, &OscillatorInputs::ZERO).unwrap();
        // y_e = 0.5, y_f = 0
        let due = (-0.5 - 2.2829 * 0.0 - 2.5 * 0.1 + 0.4111) / (0.28 * 0.3178);
        let duf = (0.2 - 2.2829 * 0.5 - 2.5 * 0.0 + 0.4111) / (0.28 * 0.3178);
        let dve = (-0.1 + 0.5) / (0.4977 * 0.3178);
        let dvf = (-0.0 + 0.0) / (0.4977 * 0.3178);
        assert_relative_eq!(d.u_e, due, max_relative = 1e-14);
        assert_relative_eq!(d.u_f, duf, max_relative = 1e-14);
        assert_relative_eq!(d.v_e, dve, max_relative = 1e-14);
        assert_relative_eq!(d.v_f, dvf, epsilon = 1e-14);
        assert_relative_eq!(d.u_e, -3.8085, max_relative = 1e-3);
    }

    #[test]
    fn non_finite_state_is_divergence() {
        let s = OscillatorState {
            u_e: f64::NAN,
            ..OscillatorState::ZERO
        };
        let err = derivatives(&s, &OscillatorParams::WALKING, &OscillatorInputs::ZERO).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
    }

    #[test]
    fn output_rectifies() {
        let o = |u_e, u_f| {
            output(&OscillatorState {
                u_e,
                u_f,
                v_e: 0.0,
                v_f: 0.0,
            })
        };
        assert_eq!(o(0.3, 0.0), -0.3);
        assert_eq!(o(-1.0, -2.0), 0.0);
        assert_eq!(o(0.25, 0.75), 0.5);
    }

    #[test]
    fn step_rejects_bad_dt() {
        let p = OscillatorParams::WALKING;
        for dt in [0.0, -0.01, 0.021, f64::NAN] {
            assert!(step(&OscillatorState::ZERO, &p, &OscillatorInputs::ZERO, dt).is_err());
        }
    }

    #[test]
    fn huge_input_reports_divergence() {
        let p = OscillatorParams::WALKING;
        let inputs = OscillatorInputs {
            s_e: 1e12,
            ..OscillatorInputs::ZERO
        };
        let err = step(&OscillatorState::ZERO, &p, &inputs, 0.01).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
    }

    #[test]
    fn one_step_matches_fine_euler() {
        let p = OscillatorParams::WALKING;
        let dt = 0.01;
        let rk = step(&OscillatorState::ZERO, &p, &OscillatorInputs::ZERO, dt).unwrap();
        // Extrapolating two Euler resolutions cancels their first-order error.
        // The RK4 local error at dt = 0.01 is about 4e-6.
        let e1 = euler_oracle([0.0; 4], &p, &OscillatorInputs::ZERO, dt, 10_000);
        let e2 = euler_oracle([0.0; 4], &p, &OscillatorInputs::ZERO, dt, 20_000);
        let oracle: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| 2.0 * b - a).collect();
        for (i, v) in rk.to_array().iter().enumerate() {
            assert!(
                (v - oracle[i]).abs() < 1e-5,
                "component {i}: {v} vs {}",
                oracle[i]
            );
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let p = OscillatorParams::WALKING;
        // Smooth segment: both neurons positive, no rectifier kink.
        let s0 = OscillatorState {
            u_e: 0.3,
            u_f: 0.2,
            v_e: 0.05,
            v_f: 0.02,
        };
        let reference = |dt: f64| {
            let e1 = euler_oracle(s0.to_array(), &p, &OscillatorInputs::ZERO, dt, 200_000);
            let e2 = euler_oracle(s0.to_array(), &p, &OscillatorInputs::ZERO, dt, 400_000);
            [0, 1, 2, 3].map(|i| 2.0 * e2[i] - e1[i])
        };
        let err = |dt: f64| {
            let rk = step(&s0, &p, &OscillatorInputs::ZERO, dt)
                .unwrap()
                .to_array();
            let r = reference(dt);
            (0..4).map(|i| (rk[i] - r[i]).abs()).fold(0.0, f64::max)
        };
        // Local error of RK4 scales as dt^5, i.e. 32x per halving.
        let ratio = err(0.02) / err(0.01);
        assert!(ratio > 16.0, "error ratio {ratio}");
    }
}
