//! A squeezed chain of four oscillators relaxing in a common bath, with
//! per-mode uncertainty and the purity of the whole system.
//!
//! `cargo run --example evolve`

use qbm::config::parse_config;
use qbm::pipeline::Scenario;

fn main() -> qbm::Result<()> {
    let cfg = parse_config(
        r#"{
            "n_osc": 4,
            "potential": {"kind": "chain", "kappa": 0.3},
            "spectral": {"kind": "ohmic_family", "gamma": 0.1, "cutoff": 5},
            "temperature": {"kind": "finite", "beta": 2.0},
            "time": {"t_max": 20.0, "n_steps": 800},
            "initial": {"kind": "squeezed", "squeezing": [0.5, 0.0, 0.0, -0.3], "positions": [1.0, 0.0, 0.0, 0.0]},
            "output": {"diagnostics": ["uncertainty", "purity"]}
        }"#,
    )?;
    let scenario = Scenario::new(cfg)?;
    let out = scenario.run()?;
    let traj = out.trajectory.expect("no caustic for the centre-of-mass equation");
    let diag = out.diagnostics.expect("diagnostics requested");
    println!("{:>7} {:>10} {}", "t", "<x1>", diag.headers.iter().map(|h| format!("{h:>10}")).collect::<String>());
    for k in (0..traj.len()).step_by(80) {
        let row: String = diag.rows[k].iter().map(|v| format!("{v:>10.4}")).collect();
        println!("{:>7.2} {:>10.4} {row}", traj.times()[k], traj.states()[k].mean()[0]);
    }
    for w in &out.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
