//! Runs a JSON scenario file, expanding any sweep, and prints a summary per
//! run. Defaults to `examples/configs/sweep_gamma.json`.
//!
//! `cargo run --example scenario -- examples/configs/chain_n4.json`

use std::path::PathBuf;

use qbm::config::parse_config;
use qbm::pipeline::Scenario;

fn main() -> qbm::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/sweep_gamma.json")
    });
    let cfg = parse_config(&std::fs::read_to_string(&path)?)?;
    for (label, run) in cfg.expand()? {
        let out = Scenario::new(run)?.run()?;
        let last = out.series.len() - 1;
        let [a, b, c, d] = out.series.node(last);
        let label = if label.is_empty() { "base".to_string() } else { label };
        print!("{label}: a={a:.3e} b={b:.3e} c={c:.3e} d={d:.3e}");
        match out.trajectory {
            Some(t) => println!(", final nu_min {:.6}", t.min_symplectic()[t.len() - 1]),
            None => println!(", evolution skipped"),
        }
    }
    Ok(())
}
