//! Time-dependent master-equation coefficients and their approach to a
//! plateau, in both normalisations of the collective equation.
//!
//! `cargo run --example coefficients`

use std::f64::consts::PI;

use qbm::environment::{CutoffShape, SpectralModel, Temperature};
use qbm::hpz::{compute_coefficients, NScaling, SolverSettings, SystemParams};

fn main() -> qbm::Result<()> {
    let model = SpectralModel::ohmic(0.05, 1.0, 5.0, CutoffShape::Exponential)?;
    let params = SystemParams::new(3, 1.0, 1.0, 1.0);
    let temp = Temperature::Finite { beta: 0.5 };
    let series = compute_coefficients(&model, temp, &params, &SolverSettings::default(), 6.0 * PI, 1200)?;

    println!("{:>8} {:>13} {:>13} {:>13} {:>13}", "t", "a", "b", "c", "d");
    for k in (0..series.len()).step_by(100) {
        let [a, b, c, d] = series.node(k);
        println!("{:>8.3} {a:>13.5e} {b:>13.5e} {c:>13.5e} {d:>13.5e}", series.grid()[k]);
    }

    let printed = SolverSettings {
        n_scaling: NScaling::AsPrinted,
        ..SolverSettings::default()
    };
    let alt = compute_coefficients(&model, temp, &params, &printed, 6.0 * PI, 1200)?;
    match alt.first_caustic() {
        Some(t) => println!("\nas_printed: first caustic at t = {t:.4}"),
        None => println!("\nas_printed: no caustic on this horizon"),
    }
    Ok(())
}
