//! The master equation against exact evolution of the oscillators together
//! with a finite bath.
//!
//! `cargo run --release --example oracle_compare`

use qbm::config::parse_config;
use qbm::pipeline::Scenario;

fn main() -> qbm::Result<()> {
    let cfg = parse_config(
        r#"{
            "n_osc": 3,
            "potential": {"kind": "chain", "kappa": 0.3},
            "spectral": {"kind": "ohmic_family", "gamma": 0.05, "cutoff": 5},
            "time": {"t_max": 12.0, "n_steps": 1200},
            "initial": {"kind": "coherent", "positions": [1.0, 0.0, -0.5]},
            "oracle": {"n_modes": 300, "omega_max": 30}
        }"#,
    )?;
    let out = Scenario::new(cfg)?.oracle_compare()?;
    for trial in &out.trials {
        match (trial.deviation, &trial.error) {
            (Some(d), _) => println!("{}: deviation {d:.3e} over the selection horizon", trial.scaling),
            (None, Some(e)) => println!("{}: failed ({e})", trial.scaling),
            _ => {}
        }
    }
    let r = &out.report;
    println!("selected {}, {} modes", out.selected, out.bath.modes().len());
    println!("bath recurrence limits comparison to t <= {:.2}", r.window_end);
    println!("max covariance deviation   {:.3e}", r.max_covariance);
    println!("max collective deviation   {:.3e}", r.max_collective);
    println!("max relative deviation     {:.3e}", r.max_relative);
    println!("passed: {}", out.passed);
    Ok(())
}
