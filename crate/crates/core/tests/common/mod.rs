//! Reference computations that share no code with the library.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

/// One harmonic bath mode, unit-free.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    pub coupling: f64,
    pub mass: f64,
    pub frequency: f64,
}

/// Exact collective coefficients `[a, b, c, d]` at time `t` for `n`
/// oscillators (mass `m`, frequency `w`) all coupled to the same discrete
/// bath through `Σ x_i`, with the counterterm included and the bath thermal
/// at inverse temperature `beta`.
///
/// Built from the full propagator `exp(F t)`: the centre-of-mass mean map
/// `Φ` gives the drift `A = Φ̇ Φ⁻¹`, and the bath-induced covariance `Nz`
/// gives the diffusion `D = Ṅz − A Nz − Nz Aᵀ`.
pub fn exact_collective_coefficients(n: usize, modes: &[Mode], m: f64, w: f64, hbar: f64, beta: f64, t: f64) -> [f64; 4] {
    let k = modes.len();
    let d = n + k;
    let kct: f64 = modes
        .iter()
        .map(|b| b.coupling * b.coupling / (b.mass * b.frequency * b.frequency))
        .sum();
    let mut f = DMatrix::zeros(2 * d, 2 * d);
    for a in 0..d {
        let mass = if a < n { m } else { modes[a - n].mass };
        f[(a, d + a)] = 1.0 / mass;
    }
    for i in 0..n {
        f[(d + i, i)] -= m * w * w;
        for j in 0..n {
            f[(d + i, j)] -= kct;
        }
        for (q, b) in modes.iter().enumerate() {
            f[(d + i, n + q)] = -b.coupling;
            f[(d + n + q, i)] = -b.coupling;
        }
    }
    for (q, b) in modes.iter().enumerate() {
        f[(d + n + q, n + q)] = -b.mass * b.frequency * b.frequency;
    }
    let e = (&f * t).exp();
    let de = &f * &e;
    let nf = n as f64;
    // rows: X̃₁ = Σx/N, P̃₁ = Σp. columns: x_i = X̃₁, p_i = P̃₁/N.
    let row = |mat: &DMatrix<f64>, col: usize, which: usize| -> f64 {
        match which {
            0 => (0..n).map(|i| mat[(i, col)]).sum::<f64>() / nf,
            _ => (0..n).map(|i| mat[(d + i, col)]).sum::<f64>(),
        }
    };
    let phi_of = |mat: &DMatrix<f64>| {
        DMatrix::from_fn(2, 2, |r, c| match c {
            0 => (0..n).map(|j| row(mat, j, r)).sum::<f64>(),
            _ => (0..n).map(|j| row(mat, d + j, r)).sum::<f64>() / nf,
        })
    };
    let phi = phi_of(&e);
    let dphi = phi_of(&de);
    let a = &dphi * phi.try_inverse().expect("invertible mean map");

    let bath_cols: Vec<usize> = (n..d).chain(d + n..2 * d).collect();
    let b = DMatrix::from_fn(2, 2 * k, |r, c| row(&e, bath_cols[c], r));
    let db = DMatrix::from_fn(2, 2 * k, |r, c| row(&de, bath_cols[c], r));
    let mut sb = DMatrix::zeros(2 * k, 2 * k);
    for (q, m) in modes.iter().enumerate() {
        let coth = 1.0 / (0.5 * hbar * m.frequency * beta).tanh();
        sb[(q, q)] = hbar * coth / (2.0 * m.mass * m.frequency);
        sb[(k + q, k + q)] = hbar * m.mass * m.frequency * coth / 2.0;
    }
    let nz = &b * &sb * b.transpose();
    let dnz = &db * &sb * b.transpose() + &b * &sb * db.transpose();
    let dd = &dnz - &a * &nz - &nz * a.transpose();
    let k_com = nf * m * w * w + nf * nf * kct;
    [-a[(1, 0)] - k_com, -a[(1, 1)], dd[(0, 1)], 0.5 * dd[(1, 1)]]
}

/// Reduced covariance of `n` oscillators after time `t`, by matrix
/// exponential of the whole network. Ordering `(x…, p…)`.
pub fn exact_reduced_covariance(
    n: usize,
    coupling_matrix: &DMatrix<f64>,
    modes: &[Mode],
    m: f64,
    w: f64,
    hbar: f64,
    beta: f64,
    system_cov: &DMatrix<f64>,
    t: f64,
) -> DMatrix<f64> {
    let k = modes.len();
    let d = n + k;
    let kct: f64 = modes
        .iter()
        .map(|b| b.coupling * b.coupling / (b.mass * b.frequency * b.frequency))
        .sum();
    let mut stiff = DMatrix::zeros(d, d);
    for i in 0..n {
        stiff[(i, i)] += m * w * w;
        for j in 0..n {
            stiff[(i, j)] += kct;
            if i != j {
                stiff[(i, j)] -= coupling_matrix[(i, j)];
                stiff[(i, i)] += coupling_matrix[(i, j)];
            }
        }
        for (q, b) in modes.iter().enumerate() {
            stiff[(i, n + q)] = b.coupling;
            stiff[(n + q, i)] = b.coupling;
        }
    }
    for (q, b) in modes.iter().enumerate() {
        stiff[(n + q, n + q)] = b.mass * b.frequency * b.frequency;
    }
    let mut f = DMatrix::zeros(2 * d, 2 * d);
    for a in 0..d {
        let mass = if a < n { m } else { modes[a - n].mass };
        f[(a, d + a)] = 1.0 / mass;
        for c in 0..d {
            f[(d + a, c)] = -stiff[(a, c)];
        }
    }
    let e = (&f * t).exp();
    let mut full = DMatrix::zeros(2 * d, 2 * d);
    let sys: Vec<usize> = (0..n).chain(d..d + n).collect();
    for i in 0..2 * n {
        for j in 0..2 * n {
            full[(sys[i], sys[j])] = system_cov[(i, j)];
        }
    }
    for (q, b) in modes.iter().enumerate() {
        let coth = 1.0 / (0.5 * hbar * b.frequency * beta).tanh();
        full[(n + q, n + q)] = hbar * coth / (2.0 * b.mass * b.frequency);
        full[(d + n + q, d + n + q)] = hbar * b.mass * b.frequency * coth / 2.0;
    }
    let out = &e * full * e.transpose();
    DMatrix::from_fn(2 * n, 2 * n, |i, j| out[(sys[i], sys[j])])
}

/// `η(s)` for `I = (2γ/π) ω e^{−ω/Λ}`.
pub fn ohmic_eta(gamma: f64, cutoff: f64, s: f64) -> f64 {
    let x = cutoff * s;
    -(4.0 * gamma / PI) * cutoff * cutoff * x / (1.0 + x * x).powi(2)
}

/// `ν(s)` at zero temperature.
pub fn ohmic_nu_zero(gamma: f64, cutoff: f64, s: f64) -> f64 {
    let x = cutoff * s;
    (2.0 * gamma / PI) * cutoff * cutoff * (1.0 - x * x) / (1.0 + x * x).powi(2)
}

/// `ν(s)` in the classical limit `coth(ħωβ/2) → 2/(ħωβ)`.
pub fn ohmic_nu_classical(gamma: f64, cutoff: f64, hbar: f64, beta: f64, s: f64) -> f64 {
    let x = cutoff * s;
    4.0 * gamma / (PI * hbar * beta) * cutoff / (1.0 + x * x)
}

/// Two-mode squeezed vacuum `(x1, x2, p1, p2)` with unit mass and frequency.
pub fn two_mode_squeezed(r: f64, hbar: f64) -> (DVector<f64>, DMatrix<f64>) {
    let (c, s) = ((2.0 * r).cosh(), (2.0 * r).sinh());
    let h = 0.5 * hbar;
    let cov = DMatrix::from_row_slice(
        4,
        4,
        &[
            h * c, h * s, 0.0, 0.0, //
            h * s, h * c, 0.0, 0.0, //
            0.0, 0.0, h * c, -h * s, //
            0.0, 0.0, -h * s, h * c,
        ],
    );
    (DVector::zeros(4), cov)
}

/// `Σ p²/2M + ½ M Ω² Σ x²`.
pub fn free_energy(x: &DVector<f64>, p: &DVector<f64>, m: f64, w: f64) -> f64 {
    p.norm_squared() / (2.0 * m) + 0.5 * m * w * w * x.norm_squared()
}

/// Relative sup-norm `max|a − b| / max|b|`.
pub fn rel_sup(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale
}

/// A few-mode bath used by coefficient checks.
pub fn sample_bath() -> Vec<Mode> {
    vec![
        Mode {
            coupling: 0.15,
            mass: 1.0,
            frequency: 0.7,
        },
        Mode {
            coupling: 0.2,
            mass: 1.3,
            frequency: 1.6,
        },
        Mode {
            coupling: 0.1,
            mass: 0.8,
            frequency: 2.5,
        },
    ]
}
