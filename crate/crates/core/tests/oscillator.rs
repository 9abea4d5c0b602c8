use biped_cpg::matsuoka::{self, OscillatorInputs, OscillatorParams, OscillatorState};
use proptest::prelude::*;

const DT: f64 = 0.01;

/// Peak-to-peak amplitude of each full cycle, cycles split at upward
/// crossings of the mean.
fn cycle_amplitudes(signal: &[f64]) -> Vec<f64> {
    let mean = signal.iter().sum::<f64>() / signal.len() as f64;
    let ups: Vec<usize> = (1..signal.len())
        .filter(|&i| signal[i - 1] < mean && signal[i] >= mean)
        .collect();
    ups.windows(2)
        .map(|w| {
            let seg = &signal[w[0]..w[1]];
            let hi = seg.iter().cloned().fold(f64::MIN, f64::max);
            let lo = seg.iter().cloned().fold(f64::MAX, f64::min);
            hi - lo
        })
        .collect()
}

#[test]
fn limit_cycle_after_transient() {
    let out = matsuoka::simulate_output(
        OscillatorState::DEFAULT_INITIAL,
        &OscillatorParams::WALKING,
        DT,
        20.0,
    )
    .unwrap();
    let amps = cycle_amplitudes(&out[500..]);
    assert!(amps.len() >= 5, "too few cycles: {amps:?}");
    for w in amps.windows(2) {
        assert!(((w[1] - w[0]) / w[0]).abs() < 0.01, "{w:?}");
    }
}

#[test]
fn kappa_rescales_time() {
    // Fine step so RK4 error stays well below the tolerance for both runs.
    const FINE: f64 = 0.001;
    let run = |kappa: f64, seconds: f64| {
        let p = OscillatorParams::WALKING.with_kappa(kappa);
        let mut s = OscillatorState::DEFAULT_INITIAL;
        let mut states = vec![s];
        for _ in 0..(seconds / FINE).round() as usize {
            s = matsuoka::step(&s, &p, &OscillatorInputs::ZERO, FINE).unwrap();
            states.push(s);
        }
        states
    };
    let slow = run(0.6, 10.0);
    let fast = run(0.3, 5.0);
    for (i, f) in fast.iter().enumerate() {
        let s = slow[2 * i];
        for (a, b) in s.to_array().iter().zip(f.to_array()) {
            assert!((a - b).abs() < 1e-4, "t={}: {a} vs {b}", i as f64 * FINE);
        }
    }
}

proptest! {
    #[test]
    fn output_within_rectified_bounds(ue in -5.0..5.0f64, uf in -5.0..5.0f64, ve in -5.0..5.0f64, vf in -5.0..5.0f64) {
        let o = matsuoka::output(&OscillatorState { u_e: ue, u_f: uf, v_e: ve, v_f: vf });
        prop_assert!(o >= -ue.max(0.0) && o <= uf.max(0.0));
    }

    #[test]
    fn origin_is_stationary_without_tonic_input(
        tau0 in 0.05..2.0f64,
        tau0p in 0.05..2.0f64,
        beta in 0.0..5.0f64,
        w0 in 0.0..5.0f64,
        kappa in 0.1..2.0f64,
        dt in 0.001..0.02f64,
    ) {
        let p = OscillatorParams { tau0, tau0_prime: tau0p, beta, w0, ut: 0.0, kappa };
        let s = matsuoka::step(&OscillatorState::ZERO, &p, &OscillatorInputs::ZERO, dt).unwrap();
        prop_assert_eq!(s, OscillatorState::ZERO);
    }
}
