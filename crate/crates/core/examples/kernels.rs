//! Dissipation and noise kernels of an Ohmic bath, and how a finite comb of
//! modes reproduces them.
//!
//! `cargo run --example kernels`

use qbm::environment::{dissipation_kernel, noise_kernel, CutoffShape, SpectralModel, Temperature};
use qbm::oracle::{discretize_bath, CombKind};

fn main() -> qbm::Result<()> {
    let cutoff = 5.0;
    let model = SpectralModel::ohmic(0.05, 1.0, cutoff, CutoffShape::Exponential)?;
    let temps = [
        ("T = 0", Temperature::Zero),
        ("beta = 1", Temperature::Finite { beta: 1.0 }),
        ("beta = 0.1", Temperature::Finite { beta: 0.1 }),
        ("classical 0.1", Temperature::Classical { beta: 0.1 }),
    ];
    print!("{:>8} {:>13}", "s", "eta");
    for (name, _) in &temps {
        print!(" {name:>13}");
    }
    println!();
    for k in 0..=10 {
        let s = k as f64 * 0.1;
        print!("{s:>8.2} {:>13.5e}", dissipation_kernel(&model, s)?);
        for (_, t) in &temps {
            print!(" {:>13.5e}", noise_kernel(&model, s, *t, 1.0)?);
        }
        println!();
    }

    println!("\ncomb size vs. worst eta error on s in [0, 10/cutoff]:");
    for n_modes in [25, 50, 100, 200, 400] {
        let comb = discretize_bath(&model, n_modes, 20.0 * cutoff, CombKind::Uniform)?.model();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for k in 0..=200 {
            let s = k as f64 * 10.0 / cutoff / 200.0;
            let exact = dissipation_kernel(&model, s)?;
            worst = worst.max((dissipation_kernel(&comb, s)? - exact).abs());
            scale = scale.max(exact.abs());
        }
        println!("  {n_modes:>4} modes: {:.2e}", worst / scale);
    }
    Ok(())
}
