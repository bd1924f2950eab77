//! Without inter-oscillator coupling only the centre-of-mass factor of the
//! total uncertainty changes in time.
//!
//! `cargo run --example uncertainty`

use qbm::config::parse_config;
use qbm::diagnostics::{total_uncertainty, uncertainty_factors};
use qbm::pipeline::Scenario;

fn main() -> qbm::Result<()> {
    let cfg = parse_config(
        r#"{
            "n_osc": 3,
            "spectral": {"kind": "ohmic_family", "gamma": 0.1, "cutoff": 5},
            "temperature": {"kind": "finite", "beta": 0.3},
            "time": {"t_max": 15.0, "n_steps": 600},
            "initial": {"kind": "squeezed", "squeezing": [0.4, -0.2, 0.1]}
        }"#,
    )?;
    let scenario = Scenario::new(cfg)?;
    let traj = scenario.evolve(&scenario.coefficients()?)?;
    println!("{:>7} {:>10} {:>10} {:>10} {:>10}", "t", "U_com", "U_2", "U_3", "total");
    for k in (0..traj.len()).step_by(60) {
        let s = &traj.states()[k];
        let u = uncertainty_factors(s, &scenario.transform, 1.0)?;
        let total = total_uncertainty(s, &scenario.transform, 1.0)?;
        println!("{:>7.2} {:>10.5} {:>10.5} {:>10.5} {total:>10.5}", traj.times()[k], u[0], u[1], u[2]);
    }
    Ok(())
}
