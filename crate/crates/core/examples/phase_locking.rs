//! Steady-state phase of every coupled pair in the default network, then the
//! same network with the pacemaker cut off.
//!
//! cargo run --example phase_locking

use biped_cpg::network::{
    column, dominant_period, phase_difference, record_outputs, CpgNetwork, CpgNetworkConfig,
    HipModulation, Joint, NUM_CPGS, PACEMAKER,
};

const DT: f64 = 0.01;
const TRANSIENT: f64 = 5.0;

fn name(cpg: usize) -> String {
    match Joint::from_cpg(cpg) {
        Some(j) => j.name().to_string(),
        None => "pacemaker".to_string(),
    }
}

fn period(series: &[[f64; NUM_CPGS]], cpg: usize) -> f64 {
    let s = &column(series, cpg)[(TRANSIENT / DT) as usize..];
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    let centered: Vec<f64> = s.iter().map(|v| v - mean).collect();
    dominant_period(&centered).map_or(f64::NAN, |p| p * DT)
}

fn main() -> biped_cpg::Result<()> {
    let cfg = CpgNetworkConfig::default();
    let series = record_outputs(
        CpgNetwork::new(cfg.clone())?,
        HipModulation::IDENTITY,
        DT,
        25.0,
    )?;
    println!(
        "{:<26} {:<26} {:>7} {:>10}",
        "from", "to", "weight", "phase rad"
    );
    for c in &cfg.couplings {
        let p = phase_difference(
            &column(&series, c.from),
            &column(&series, c.to),
            DT,
            TRANSIENT,
        )?;
        println!(
            "{:<26} {:<26} {:>7.1} {:>10.3}",
            name(c.from),
            name(c.to),
            c.weight,
            p
        );
    }

    let hip = Joint::HipSagittalRight.cpg();
    let isolated = record_outputs(
        CpgNetwork::new_unchecked(cfg.with_pacemaker_isolated()),
        HipModulation::IDENTITY,
        DT,
        25.0,
    )?;
    println!();
    println!("periods (s)   pacemaker   right hip");
    println!(
        "intact        {:>9.4}   {:>9.4}",
        period(&series, PACEMAKER),
        period(&series, hip)
    );
    println!(
        "isolated      {:>9.4}   {:>9.4}",
        period(&isolated, PACEMAKER),
        period(&isolated, hip)
    );
    Ok(())
}
