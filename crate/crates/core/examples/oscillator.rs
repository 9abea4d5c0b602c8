//! Single Matsuoka oscillator with the walking constants: period and
//! amplitude for a few values of the time-scale factor.
//!
//! cargo run --example oscillator

use biped_cpg::matsuoka::{simulate_output, OscillatorParams, OscillatorState};
use biped_cpg::network::dominant_period;

const DT: f64 = 0.01;

fn main() -> biped_cpg::Result<()> {
    println!("{:>7} {:>10} {:>10}", "kappa", "period s", "amplitude");
    for kappa in [0.2, 0.3178, 0.5, 0.8] {
        let params = OscillatorParams::WALKING.with_kappa(kappa);
        let out = simulate_output(OscillatorState::DEFAULT_INITIAL, &params, DT, 20.0)?;
        let tail = &out[500..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let centered: Vec<f64> = tail.iter().map(|v| v - mean).collect();
        let period = dominant_period(&centered).map_or(f64::NAN, |p| p * DT);
        let hi = tail.iter().cloned().fold(f64::MIN, f64::max);
        let lo = tail.iter().cloned().fold(f64::MAX, f64::min);
        println!("{kappa:>7.4} {period:>10.4} {:>10.4}", 0.5 * (hi - lo));
    }
    Ok(())
}
