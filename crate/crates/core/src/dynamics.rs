//! Gaussian-state evolution under the exact master equation.
//!
//! With `u = (1/N) 1` the moment equations in original coordinates read
//!
//! ```text
//! ṁ = A m,   Σ̇ = A Σ + Σ Aᵀ + D
//! A = [[0, I/M], [−(MΩ² I + K_V + κ_ct 11ᵀ + a u uᵀ), −b u 1ᵀ]]
//! D = [[0, (c/N) 11ᵀ], [(c/N) 11ᵀ, 2d u uᵀ]]
//! ```
//!
//! so dissipation and diffusion act through rank-one collective projectors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gaussian::{symmetrize, GaussianState};
use crate::hpz::CoefficientSeries;
use crate::transform::{CanonicalTransform, Direction};

/// `V = Σ_{i<j} ½ κ_ij (x_i − x_j)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticPotential {
    kappa: DMatrix<f64>,
}

/// Named coupling patterns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    None,
    /// Nearest neighbours `(i, i+1)`, open ends.
    Chain { kappa: f64 },
    AllPairs { kappa: f64 },
    /// Full symmetric `κ` matrix with zero diagonal.
    Dense { kappa: Vec<Vec<f64>> },
}

impl PotentialSpec {
    pub fn build(&self, n: usize) -> Result<QuadraticPotential> {
        match self {
            PotentialSpec::None => Ok(QuadraticPotential::none(n)),
            PotentialSpec::Chain { kappa } => QuadraticPotential::chain(n, *kappa),
            PotentialSpec::AllPairs { kappa } => QuadraticPotential::all_pairs(n, *kappa),
            PotentialSpec::Dense { kappa } => {
                if kappa.len() != n || kappa.iter().any(|r| r.len() != n) {
                    return domain(format!("dense kappa must be {n}x{n}"));
                }
                QuadraticPotential::dense(DMatrix::from_fn(n, n, |i, j| kappa[i][j]))
            }
        }
    }
}

impl QuadraticPotential {
    pub fn none(n: usize) -> Self {
        Self {
            kappa: DMatrix::zeros(n, n),
        }
    }

    pub fn chain(n: usize, kappa: f64) -> Result<Self> {
        let mut k = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            k[(i, i + 1)] = kappa;
            k[(i + 1, i)] = kappa;
        }
        Self::dense(k)
    }

    pub fn all_pairs(n: usize, kappa: f64) -> Result<Self> {
        Self::dense(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { kappa }))
    }

    pub fn dense(kappa: DMatrix<f64>) -> Result<Self> {
        let n = kappa.nrows();
        if kappa.ncols() != n {
            return domain("coupling matrix must be square");
        }
        for i in 0..n {
            if kappa[(i, i)] != 0.0 {
                return domain(format!("coupling matrix diagonal must be zero (entry {i})"));
            }
            for j in 0..n {
                let v = kappa[(i, j)];
                if !(v >= 0.0) || !v.is_finite() {
                    return domain(format!("coupling ({i},{j}) must be finite and >= 0, got {v}"));
                }
                if v != kappa[(j, i)] {
                    return domain(format!("coupling matrix not symmetric at ({i},{j})"));
                }
            }
        }
        Ok(Self { kappa })
    }

    pub fn n_osc(&self) -> usize {
        self.kappa.nrows()
    }

    pub fn kappa(&self) -> &DMatrix<f64> {
        &self.kappa
    }

    pub fn is_zero(&self) -> bool {
        self.kappa.iter().all(|&v| v == 0.0)
    }

    /// Hessian of `V`: the weighted graph Laplacian of `κ`.
    pub fn stiffness(&self) -> DMatrix<f64> {
        let n = self.n_osc();
        let mut k = -self.kappa.clone();
        for i in 0..n {
            k[(i, i)] = self.kappa.row(i).sum();
        }
        k
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        let n = self.n_osc();
        let mut e = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                e += 0.5 * self.kappa[(i, j)] * (x[i] - x[j]).powi(2);
            }
        }
        e
    }
}

/// Physical constants entering the moment equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentParams {
    pub n_osc: usize,
    pub mass: f64,
    pub omega: f64,
    pub hbar: f64,
    pub counterterm_stiffness: f64,
}

impl MomentParams {
    pub fn from_series(series: &CoefficientSeries) -> Self {
        let p = series.provenance();
        Self {
            n_osc: p.params.n_osc,
            mass: p.params.mass,
            omega: p.params.omega,
            hbar: p.params.hbar,
            counterterm_stiffness: p.counterterm_stiffness,
        }
    }

    /// `M Ω² I + K_V + κ_ct 11ᵀ`.
    pub fn stiffness(&self, potential: &QuadraticPotential) -> DMatrix<f64> {
        let n = self.n_osc;
        let mut k = potential.stiffness();
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] += self.counterterm_stiffness;
            }
            k[(i, i)] += self.mass * self.omega * self.omega;
        }
        k
    }
}

/// Drift matrix `A` and diffusion matrix `D` for coefficients `(a, b, c, d)`.
pub fn generator(coeffs: [f64; 4], stiffness: &DMatrix<f64>, params: &MomentParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = params.n_osc;
    let nf = n as f64;
    let [a, b, c, d] = coeffs;
    let mut drift = DMatrix::zeros(2 * n, 2 * n);
    let mut diff = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        drift[(i, n + i)] = 1.0 / params.mass;
        for j in 0..n {
            drift[(n + i, j)] = -stiffness[(i, j)] - a / (nf * nf);
            drift[(n + i, n + j)] = -b / nf;
            diff[(i, n + j)] = c / nf;
            diff[(n + i, j)] = c / nf;
            diff[(n + i, n + j)] = 2.0 * d / (nf * nf);
        }
    }
    (drift, diff)
}

/// Time derivatives of the mean and covariance.
pub fn moment_rhs(
    state: &GaussianState,
    coeffs: [f64; 4],
    potential: &QuadraticPotential,
    params: &MomentParams,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if coeffs.iter().any(|v| !v.is_finite()) {
        return domain("coefficients are not finite (caustic-flagged sample)");
    }
    if state.n_modes() != params.n_osc || potential.n_osc() != params.n_osc {
        return domain("state, potential and parameters disagree on N");
    }
    let (drift, diff) = generator(coeffs, &params.stiffness(potential), params);
    let dm = &drift * state.mean();
    let ac = &drift * state.cov();
    let dc = &ac + ac.transpose() + diff;
    Ok((dm, dc))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// RK4 steps per coefficient-grid interval.
    pub substeps: usize,
    /// Physicality margin (in units of ħ) below which a warning is recorded.
    pub warn_margin: f64,
    /// Margin (in units of ħ) below which evolution fails.
    pub fail_margin: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            substeps: 4,
            warn_margin: 1e-6,
            fail_margin: 1e-3,
        }
    }
}

/// States on the coefficient grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<GaussianState>,
    min_symplectic: Vec<f64>,
    warnings: Vec<String>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<GaussianState>) -> Result<Self> {
        if times.len() != states.len() || times.is_empty() {
            return domain("trajectory needs one state per time");
        }
        let min_symplectic = states
            .iter()
            .map(|s| s.symplectic_eigenvalues().map(|v| v[0]).unwrap_or(f64::NEG_INFINITY))
            .collect();
        Ok(Self {
            times,
            states,
            min_symplectic,
            warnings: Vec::new(),
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[GaussianState] {
        &self.states
    }

    pub fn min_symplectic(&self) -> &[f64] {
        &self.min_symplectic
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &GaussianState {
        self.states.last().expect("trajectory is never empty")
    }

    /// Every state mapped through the phase-space congruence `l`.
    pub fn congruence(&self, l: &DMatrix<f64>) -> Self {
        Self {
            times: self.times.clone(),
            states: self.states.iter().map(|s| s.congruence(l)).collect(),
            min_symplectic: self.min_symplectic.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

struct Recorder {
    hbar: f64,
    options: EvolveOptions,
    traj: Trajectory,
}

impl Recorder {
    fn new(hbar: f64, options: EvolveOptions, capacity: usize) -> Self {
        Self {
            hbar,
            options,
            traj: Trajectory {
                times: Vec::with_capacity(capacity),
                states: Vec::with_capacity(capacity),
                min_symplectic: Vec::with_capacity(capacity),
                warnings: Vec::new(),
            },
        }
    }

    fn push(&mut self, t: f64, state: GaussianState) -> Result<()> {
        let nu_min = state
            .symplectic_eigenvalues()
            .map(|v| v[0])
            .map_err(|e| Error::Numeric(format!("at t = {t}: {e}")))?;
        let margin = (nu_min - 0.5 * self.hbar) / self.hbar;
        if margin < -self.options.fail_margin {
            return Err(Error::Numeric(format!(
                "state became unphysical at t = {t}: smallest symplectic eigenvalue {nu_min}"
            )));
        }
        if margin < -self.options.warn_margin {
            self.traj.warnings.push(format!(
                "t = {t}: smallest symplectic eigenvalue {nu_min} below ħ/2 by {:e} ħ",
                -margin
            ));
        }
        self.traj.times.push(t);
        self.traj.states.push(state);
        self.traj.min_symplectic.push(nu_min);
        Ok(())
    }
}

/// One RK4 step of `ẏ = A y` (mean) and `Σ̇ = A Σ + Σ Aᵀ + D`.
fn rk4_step(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    h: f64,
    gens: [&(DMatrix<f64>, DMatrix<f64>); 3],
) -> (DVector<f64>, DMatrix<f64>) {
    let f = |g: &(DMatrix<f64>, DMatrix<f64>), m: &DVector<f64>, c: &DMatrix<f64>| {
        let ac = &g.0 * c;
        (&g.0 * m, &ac + ac.transpose() + &g.1)
    };
    let (m1, c1) = f(gens[0], mean, cov);
    let (m2, c2) = f(gens[1], &(mean + &m1 * (0.5 * h)), &(cov + &c1 * (0.5 * h)));
    let (m3, c3) = f(gens[1], &(mean + &m2 * (0.5 * h)), &(cov + &c2 * (0.5 * h)));
    let (m4, c4) = f(gens[2], &(mean + &m3 * h), &(cov + &c3 * h));
    let mean = mean + (m1 + m2 * 2.0 + m3 * 2.0 + m4) * (h / 6.0);
    let mut cov = cov + (c1 + c2 * 2.0 + c3 * 2.0 + c4) * (h / 6.0);
    symmetrize(&mut cov);
    (mean, cov)
}

fn check_initial(initial: &GaussianState, params: &MomentParams, potential: &QuadraticPotential) -> Result<()> {
    if initial.n_modes() != params.n_osc || potential.n_osc() != params.n_osc {
        return domain(format!(
            "initial state has {} modes, potential {}, coefficients built for {}",
            initial.n_modes(),
            potential.n_osc(),
            params.n_osc
        ));
    }
    if !initial.is_physical(params.hbar, 1e-9 * params.hbar) {
        return domain("initial state violates the uncertainty principle");
    }
    Ok(())
}

/// Fixed-step RK4 integration of the moment equations on the coefficient
/// grid, with coefficients interpolated by cubics inside each interval.
pub fn evolve(
    initial: &GaussianState,
    series: &CoefficientSeries,
    potential: &QuadraticPotential,
    options: &EvolveOptions,
) -> Result<Trajectory> {
    let params = MomentParams::from_series(series);
    check_initial(initial, &params, potential)?;
    let stiffness = params.stiffness(potential);
    let sub = options.substeps.max(1);
    let h = series.step() / sub as f64;
    let mut rec = Recorder::new(params.hbar, *options, series.len());
    let mut mean = initial.mean().clone();
    let mut cov = initial.cov().clone();
    rec.push(0.0, initial.clone())?;
    let gen_at = |t: f64| -> Result<(DMatrix<f64>, DMatrix<f64>)> { Ok(generator(series.at(t)?, &stiffness, &params)) };
    for k in 0..series.len() - 1 {
        let t0 = k as f64 * series.step();
        let mut g0 = gen_at(t0)?;
        for s in 0..sub {
            let t = t0 + s as f64 * h;
            let gm = gen_at(t + 0.5 * h)?;
            let g1 = gen_at(if s + 1 == sub { (k + 1) as f64 * series.step() } else { t + h })?;
            (mean, cov) = rk4_step(&mean, &cov, h, [&g0, &gm, &g1]);
            g0 = g1;
        }
        if !cov.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("moments diverged at t = {}", (k + 1) as f64 * series.step())));
        }
        rec.push(
            (k + 1) as f64 * series.step(),
            GaussianState::from_parts_unchecked(mean.clone(), cov.clone()),
        )?;
    }
    Ok(rec.traj)
}

/// Quadratic form of `H̃₂` on `(X̃₂…X̃_N, P̃₂…P̃_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeHamiltonian {
    /// `(N−1)×(N−1)` position block, including `M̃_i M Ω²` on the diagonal.
    pub stiffness: DMatrix<f64>,
    /// The potential part `Ṽ` alone.
    pub potential: DMatrix<f64>,
    /// `1/(M̃_i M)`.
    pub inverse_masses: DVector<f64>,
}

impl RelativeHamiltonian {
    /// Block-diagonal `(2N−2)×(2N−2)` matrix `H` with `H̃₂ = ½ ξᵀ H ξ`.
    pub fn form(&self) -> DMatrix<f64> {
        let r = self.inverse_masses.len();
        let mut h = DMatrix::zeros(2 * r, 2 * r);
        h.view_mut((0, 0), (r, r)).copy_from(&self.stiffness);
        for i in 0..r {
            h[(r + i, r + i)] = self.inverse_masses[i];
        }
        h
    }

    /// Hamiltonian drift `[[0, M⁻¹], [−K, 0]]`.
    pub fn drift(&self) -> DMatrix<f64> {
        let r = self.inverse_masses.len();
        let mut a = DMatrix::zeros(2 * r, 2 * r);
        for i in 0..r {
            a[(i, r + i)] = self.inverse_masses[i];
            for j in 0..r {
                a[(r + i, j)] = -self.stiffness[(i, j)];
            }
        }
        a
    }
}

/// Transformed potential `S K_V Sᵀ` restricted to the relative sector.
/// Errors if the centre-of-mass row does not vanish.
pub fn relative_hamiltonian(
    potential: &QuadraticPotential,
    transform: &CanonicalTransform,
    mass: f64,
    omega: f64,
) -> Result<RelativeHamiltonian> {
    let n = transform.n_osc();
    if potential.n_osc() != n {
        return domain("potential and transform sizes differ");
    }
    let s = transform.s_matrix();
    let kt = s * potential.stiffness() * s.transpose();
    let scale = kt.amax().max(potential.kappa().amax()).max(f64::MIN_POSITIVE);
    let com_row = (0..n).map(|j| kt[(0, j)].abs()).fold(0.0, f64::max);
    if com_row > 1e-12 * scale.max(1.0) {
        return Err(Error::Consistency(format!(
            "transformed potential couples to the centre of mass (|coefficient| = {com_row:e})"
        )));
    }
    let r = n - 1;
    let potential_block = kt.view((1, 1), (r, r)).into_owned();
    let masses = transform.eff_masses();
    let mut stiffness = potential_block.clone();
    for i in 0..r {
        stiffness[(i, i)] += masses[i + 1] * mass * omega * omega;
    }
    Ok(RelativeHamiltonian {
        stiffness,
        potential: potential_block,
        inverse_masses: DVector::from_fn(r, |i, _| 1.0 / (masses[i + 1] * mass)),
    })
}

/// Index list `(X̃_1, P̃_1, X̃_2…X̃_N, P̃_2…P̃_N)` into the transformed phase
/// space ordered `(X̃…, P̃…)`.
fn com_first_order(n: usize) -> Vec<usize> {
    let mut idx = vec![0, n];
    idx.extend(1..n);
    idx.extend(n + 1..2 * n);
    idx
}

/// Evolution in the transformed frame: the `(X̃₁, P̃₁)` block follows the
/// single-mode HPZ moment equations with mass `N M`, the relative sector
/// is propagated exactly under `H̃₂`, and the cross-correlations couple the
/// two. States are returned in original coordinates.
pub fn factorized_evolve(
    initial: &GaussianState,
    series: &CoefficientSeries,
    potential: &QuadraticPotential,
    transform: &CanonicalTransform,
    options: &EvolveOptions,
) -> Result<Trajectory> {
    let params = MomentParams::from_series(series);
    check_initial(initial, &params, potential)?;
    let n = params.n_osc;
    if transform.n_osc() != n {
        return domain("transform size differs from N");
    }
    let rel = if n > 1 {
        Some(relative_hamiltonian(potential, transform, params.mass, params.omega)?)
    } else {
        None
    };
    let r2 = 2 * (n - 1);
    let forward = transform.phase_space_matrix(Direction::Forward);
    let back = transform.phase_space_matrix(Direction::Inverse);
    let order = com_first_order(n);
    let permute = DMatrix::from_fn(2 * n, 2 * n, |i, j| if order[i] == j { 1.0 } else { 0.0 });
    let to_blocks = &permute * &forward;
    let from_blocks = &back * permute.transpose();

    let start = initial.congruence(&to_blocks);
    let mut mean = start.mean().clone();
    let mut cov = start.cov().clone();

    let mc = n as f64 * params.mass;
    let k_com = mc * params.omega * params.omega + (n * n) as f64 * params.counterterm_stiffness;
    let com_gen = |t: f64| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let [a, b, c, d] = series.at(t)?;
        Ok((
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0 / mc, -(k_com + a), -b]),
            DMatrix::from_row_slice(2, 2, &[0.0, c, c, 2.0 * d]),
        ))
    };

    let sub = options.substeps.max(1);
    let h = series.step() / sub as f64;
    let (a_rel, prop) = match &rel {
        Some(rel) => {
            let a_rel = rel.drift();
            let prop = (&a_rel * h).exp();
            (a_rel, prop)
        }
        None => (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)),
    };

    let mut rec = Recorder::new(params.hbar, *options, series.len());
    rec.push(0.0, initial.clone())?;
    let mut g0 = com_gen(0.0)?;
    for k in 0..series.len() - 1 {
        for s in 0..sub {
            let t = k as f64 * series.step() + s as f64 * h;
            let gm = com_gen(t + 0.5 * h)?;
            let g1 = com_gen(if s + 1 == sub { (k + 1) as f64 * series.step() } else { t + h })?;

            // COM mean and block: single-mode HPZ equations
            let m_c = mean.rows(0, 2).into_owned();
            let c_c = cov.view((0, 0), (2, 2)).into_owned();
            let (m_c, c_c) = rk4_step(&m_c, &c_c, h, [&g0, &gm, &g1]);

            // cross block X: Ẋ = A_c X + X A_rᵀ
            let cross = cov.view((0, 2), (2, r2)).into_owned();
            let cross = if r2 > 0 {
                let f = |g: &DMatrix<f64>, x: &DMatrix<f64>| g * x + x * a_rel.transpose();
                let k1 = f(&g0.0, &cross);
                let k2 = f(&gm.0, &(&cross + &k1 * (0.5 * h)));
                let k3 = f(&gm.0, &(&cross + &k2 * (0.5 * h)));
                let k4 = f(&g1.0, &(&cross + &k3 * h));
                &cross + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
            } else {
                cross
            };

            // relative sector: exact unitary propagation
            if r2 > 0 {
                let m_r = &prop * mean.rows(2, r2);
                let c_r = &prop * cov.view((2, 2), (r2, r2)) * prop.transpose();
                mean.rows_mut(2, r2).copy_from(&m_r);
                cov.view_mut((2, 2), (r2, r2)).copy_from(&c_r);
                cov.view_mut((0, 2), (2, r2)).copy_from(&cross);
                cov.view_mut((2, 0), (r2, 2)).copy_from(&cross.transpose());
            }
            mean.rows_mut(0, 2).copy_from(&m_c);
            cov.view_mut((0, 0), (2, 2)).copy_from(&c_c);
            symmetrize(&mut cov);
            g0 = g1;
        }
        let state = GaussianState::from_parts_unchecked(mean.clone(), cov.clone()).congruence(&from_blocks);
        rec.push((k + 1) as f64 * series.step(), state)?;
    }
    Ok(rec.traj)
}
