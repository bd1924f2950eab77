//! Entanglement generated between two uncoupled oscillators by a shared
//! zero-temperature bath.
//!
//! `cargo run --release --example negativity`

use qbm::config::parse_config;
use qbm::diagnostics::{log_negativity, LogBase, ModeSelection};
use qbm::pipeline::Scenario;

fn main() -> qbm::Result<()> {
    let cfg = parse_config(
        r#"{
            "n_osc": 2,
            "spectral": {"kind": "ohmic_family", "gamma": 0.2, "cutoff": 5},
            "temperature": {"kind": "zero"},
            "time": {"t_max": 30.0, "n_steps": 1500},
            "initial": {"kind": "squeezed", "squeezing": [0.6, 0.0]}
        }"#,
    )?;
    let scenario = Scenario::new(cfg)?;
    let traj = scenario.evolve(&scenario.coefficients()?)?;
    let a = ModeSelection::original(vec![0])?;
    let b = ModeSelection::original(vec![1])?;
    println!("{:>7} {:>12}", "t", "E_N (bits)");
    for k in (0..traj.len()).step_by(100) {
        let e = log_negativity(&traj.states()[k], (&a, &b), 1.0, LogBase::Two)?;
        println!("{:>7.2} {e:>12.5}", traj.times()[k]);
    }
    Ok(())
}
