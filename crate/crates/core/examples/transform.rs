//! Collective coordinates for a few system sizes.
//!
//! `cargo run --example transform`

use qbm::transform::{build_transform, com_component_of_difference, verify_canonical};

fn main() -> qbm::Result<()> {
    for n in 1..=6 {
        let t = build_transform(n)?;
        let report = verify_canonical(&t, 100, 42);
        let masses: Vec<String> = t.eff_masses().iter().map(|m| format!("{m:.4}")).collect();
        println!("N = {n}: effective masses [{}], max deviation {:.1e}", masses.join(", "), report.max_deviation());
    }

    let t = build_transform(4)?;
    println!("\nT for N = 4:\n{}", t.t_matrix());
    println!("S for N = 4:\n{}", t.s_matrix());
    let worst = (0..4)
        .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| com_component_of_difference(&t, i, j).map(f64::abs))
        .collect::<qbm::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    println!("largest centre-of-mass part of any x_i - x_j: {worst:.1e}");
    Ok(())
}
