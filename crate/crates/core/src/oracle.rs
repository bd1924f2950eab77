//! Exact reference dynamics: the system and a discrete bath form one
//! quadratic network, propagated by normal modes, with the bath traced out
//! by taking the system block of the covariance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{QuadraticPotential, Trajectory};
use crate::environment::{BathMode, SpectralModel, Temperature};
use crate::error::{domain, Error, Result};
use crate::gaussian::GaussianState;
use crate::hpz::SystemParams;
use crate::quad::gauss_legendre;
use crate::transform::{CanonicalTransform, Direction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombKind {
    /// Midpoints `ω_j = (j − ½) Δω`.
    #[default]
    Uniform,
    GaussLegendre,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretizationRecipe {
    pub n_modes: usize,
    pub omega_max: f64,
    pub comb: CombKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    modes: Vec<BathMode>,
    recipe: Option<DiscretizationRecipe>,
}

impl BathSpec {
    pub fn new(modes: Vec<BathMode>) -> Result<Self> {
        SpectralModel::discrete(modes.clone())?;
        Ok(Self { modes, recipe: None })
    }

    pub fn modes(&self) -> &[BathMode] {
        &self.modes
    }

    pub fn recipe(&self) -> Option<DiscretizationRecipe> {
        self.recipe
    }

    /// The same bath as a discrete spectral model.
    pub fn model(&self) -> SpectralModel {
        SpectralModel::Discrete {
            modes: self.modes.clone(),
        }
    }

    /// `2π / Δω` for uniform combs.
    pub fn recurrence_time(&self) -> Option<f64> {
        self.recipe.and_then(|r| match r.comb {
            CombKind::Uniform => Some(2.0 * std::f64::consts::PI * r.n_modes as f64 / r.omega_max),
            CombKind::GaussLegendre => None,
        })
    }
}

/// Delta-comb realisation of a continuum density with unit bath masses:
/// `C_j² = 2 m_j ω_j I(ω_j) w_j`, where `w_j` are the comb weights.
/// Discrete models are returned unchanged.
pub fn discretize_bath(model: &SpectralModel, n_modes: usize, omega_max: f64, comb: CombKind) -> Result<BathSpec> {
    if n_modes == 0 {
        return domain("n_modes must be >= 1");
    }
    if !(omega_max > 0.0) || !omega_max.is_finite() {
        return domain(format!("omega_max must be > 0, got {omega_max}"));
    }
    model.validate()?;
    let family = match model {
        SpectralModel::Discrete { modes } => return BathSpec::new(modes.clone()),
        SpectralModel::OhmicFamily(f) => f,
    };
    let (nodes, weights): (Vec<f64>, Vec<f64>) = match comb {
        CombKind::Uniform => {
            let dw = omega_max / n_modes as f64;
            ((1..=n_modes).map(|j| (j as f64 - 0.5) * dw).collect(), vec![dw; n_modes])
        }
        CombKind::GaussLegendre => {
            let (x, w) = gauss_legendre(n_modes);
            (
                x.iter().map(|x| 0.5 * omega_max * (x + 1.0)).collect(),
                w.iter().map(|w| 0.5 * omega_max * w).collect(),
            )
        }
    };
    let modes = nodes
        .iter()
        .zip(&weights)
        .map(|(&w, &dw)| BathMode {
            coupling: (2.0 * w * family.density(w) * dw).sqrt(),
            mass: 1.0,
            frequency: w,
        })
        .collect();
    Ok(BathSpec {
        modes,
        recipe: Some(DiscretizationRecipe {
            n_modes,
            omega_max,
            comb,
        }),
    })
}

/// `½ Σ p_a²/m_a + ½ xᵀ K x` over system and bath coordinates, system first.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkHamiltonian {
    n_sys: usize,
    k: DMatrix<f64>,
    masses: DVector<f64>,
}

impl NetworkHamiltonian {
    /// Every system oscillator couples to every bath mode with `C_j`.
    pub fn build(params: &SystemParams, potential: &QuadraticPotential, bath: &BathSpec) -> Result<Self> {
        params.validate()?;
        let n = params.n_osc;
        if potential.n_osc() != n {
            return domain("potential size differs from n_osc");
        }
        let nb = bath.modes.len();
        let dim = n + nb;
        let mut k = DMatrix::zeros(dim, dim);
        k.view_mut((0, 0), (n, n)).copy_from(&potential.stiffness());
        let counterterm = if params.counterterm {
            bath.model().renormalization_stiffness()
        } else {
            0.0
        };
        for i in 0..n {
            k[(i, i)] += params.mass * params.omega * params.omega;
            for j in 0..n {
                k[(i, j)] += counterterm;
            }
        }
        for (j, m) in bath.modes.iter().enumerate() {
            k[(n + j, n + j)] = m.mass * m.frequency * m.frequency;
            for i in 0..n {
                k[(i, n + j)] = m.coupling;
                k[(n + j, i)] = m.coupling;
            }
        }
        let masses = DVector::from_fn(dim, |a, _| if a < n { params.mass } else { bath.modes[a - n].mass });
        Ok(Self { n_sys: n, k, masses })
    }

    pub fn n_sys(&self) -> usize {
        self.n_sys
    }

    pub fn dim(&self) -> usize {
        self.masses.len()
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn masses(&self) -> &DVector<f64> {
        &self.masses
    }

    /// Expected energy `½ Tr(H Σ) + ½ mᵀ H m`.
    pub fn energy(&self, state: &GaussianState) -> f64 {
        let d = self.dim();
        let mut e = 0.0;
        let m = state.mean();
        let c = state.cov();
        for a in 0..d {
            e += 0.5 * (c[(d + a, d + a)] + m[d + a] * m[d + a]) / self.masses[a];
            for b in 0..d {
                e += 0.5 * self.k[(a, b)] * (c[(a, b)] + m[a] * m[b]);
            }
        }
        e
    }
}

/// Normal-mode decomposition of a network, reusable for many times.
#[derive(Debug, Clone)]
pub struct NormalModes {
    dim: usize,
    freqs: DVector<f64>,
    /// `M^{-1/2} Q`
    to_x: DMatrix<f64>,
    /// `M^{1/2} Q`
    to_p: DMatrix<f64>,
    /// `Qᵀ M^{1/2}`
    from_x: DMatrix<f64>,
    /// `Qᵀ M^{-1/2}`
    from_p: DMatrix<f64>,
    min_eigenvalue: f64,
}

impl NormalModes {
    pub fn new(net: &NetworkHamiltonian) -> Result<Self> {
        let dim = net.dim();
        let inv_sqrt = net.masses.map(|m| 1.0 / m.sqrt());
        let kw = DMatrix::from_fn(dim, dim, |a, b| inv_sqrt[a] * net.k[(a, b)] * inv_sqrt[b]);
        let eig = SymmetricEigen::try_new(kw, 1e-14, 10_000)
            .ok_or_else(|| Error::Numeric("eigendecomposition of the network did not converge".into()))?;
        let min_eigenvalue = eig.eigenvalues.min();
        let scale = eig.eigenvalues.amax().max(1.0);
        if min_eigenvalue < -1e-10 * scale {
            return Err(Error::Numeric(format!(
                "network is unstable: squared normal-mode frequency {min_eigenvalue}"
            )));
        }
        let freqs = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let q = eig.eigenvectors;
        let to_x = DMatrix::from_fn(dim, dim, |a, k| inv_sqrt[a] * q[(a, k)]);
        let to_p = DMatrix::from_fn(dim, dim, |a, k| q[(a, k)] / inv_sqrt[a]);
        Ok(Self {
            dim,
            freqs,
            from_x: to_p.transpose(),
            from_p: to_x.transpose(),
            to_x,
            to_p,
            min_eigenvalue,
        })
    }

    pub fn frequencies(&self) -> &DVector<f64> {
        &self.freqs
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    /// Rows of the phase-space propagator at time `t` for the listed
    /// coordinates (`0..dim` positions, `dim..2dim` momenta).
    fn propagator_rows(&self, rows_x: usize, t: f64) -> DMatrix<f64> {
        let d = self.dim;
        let (c, s_over, w_s): (Vec<f64>, Vec<f64>, Vec<f64>) = self
            .freqs
            .iter()
            .map(|&w| {
                let (s, c) = (w * t).sin_cos();
                let s_over = if w * t < 1e-8 { t } else { s / w };
                (c, s_over, w * s)
            })
            .fold((vec![], vec![], vec![]), |(mut a, mut b, mut e), (x, y, z)| {
                a.push(x);
                b.push(y);
                e.push(z);
                (a, b, e)
            });
        let tx = self.to_x.rows(0, rows_x);
        let tp = self.to_p.rows(0, rows_x);
        let scale_cols = |m: &DMatrix<f64>, v: &[f64]| {
            let mut m = m.clone();
            for (k, mut col) in m.column_iter_mut().enumerate() {
                col *= v[k];
            }
            m
        };
        let tx = tx.into_owned();
        let tp = tp.into_owned();
        let mut out = DMatrix::zeros(2 * rows_x, 2 * d);
        // x(t) = M^{-1/2}Q [cos · Qᵀ M^{1/2} x0 + sin/ω · Qᵀ M^{-1/2} p0]
        out.view_mut((0, 0), (rows_x, d)).copy_from(&(scale_cols(&tx, &c) * &self.from_x));
        out.view_mut((0, d), (rows_x, d)).copy_from(&(scale_cols(&tx, &s_over) * &self.from_p));
        // p(t) = M^{1/2}Q [−ω sin · Qᵀ M^{1/2} x0 + cos · Qᵀ M^{-1/2} p0]
        let neg: Vec<f64> = w_s.iter().map(|v| -v).collect();
        out.view_mut((rows_x, 0), (rows_x, d)).copy_from(&(scale_cols(&tp, &neg) * &self.from_x));
        out.view_mut((rows_x, d), (rows_x, d)).copy_from(&(scale_cols(&tp, &c) * &self.from_p));
        out
    }

    /// Full phase-space propagator at `t`, ordered `(x…, p…)`.
    pub fn propagator(&self, t: f64) -> DMatrix<f64> {
        self.propagator_rows(self.dim, t)
    }
}

/// Thermal state of each bath mode: `⟨q²⟩ = ħ coth/(2mω)`, `⟨p²⟩ = ħ m ω coth/2`.
pub fn thermal_bath_state(bath: &BathSpec, temperature: Temperature, hbar: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    temperature.validate()?;
    Ok(bath
        .modes
        .iter()
        .map(|m| {
            let coth = temperature.coth_factor(m.frequency, hbar);
            (
                hbar * coth / (2.0 * m.mass * m.frequency),
                hbar * m.mass * m.frequency * coth / 2.0,
            )
        })
        .unzip())
}

/// Product of the system state and the thermal bath, ordered
/// `(x_sys…, q_bath…, P_sys…, p_bath…)`.
pub fn product_initial_state(
    system: &GaussianState,
    bath: &BathSpec,
    temperature: Temperature,
    hbar: f64,
) -> Result<GaussianState> {
    let n = system.n_modes();
    let nb = bath.modes.len();
    let d = n + nb;
    let (q2, p2) = thermal_bath_state(bath, temperature, hbar)?;
    let mut mean = DVector::zeros(2 * d);
    let mut cov = DMatrix::zeros(2 * d, 2 * d);
    let idx = |i: usize| if i < n { i } else { d + i - n };
    for i in 0..2 * n {
        mean[idx(i)] = system.mean()[i];
        for j in 0..2 * n {
            cov[(idx(i), idx(j))] = system.cov()[(i, j)];
        }
    }
    for j in 0..nb {
        cov[(n + j, n + j)] = q2[j];
        cov[(d + n + j, d + n + j)] = p2[j];
    }
    GaussianState::new(mean, cov)
}

/// Exact reduced dynamics of the system on `t_grid`.
pub fn exact_reduced_evolution(
    network: &NetworkHamiltonian,
    bath: &BathSpec,
    system_initial: &GaussianState,
    temperature: Temperature,
    hbar: f64,
    t_grid: &[f64],
) -> Result<Trajectory> {
    let n = network.n_sys;
    if system_initial.n_modes() != n {
        return domain("system state size differs from the network");
    }
    if bath.modes.len() + n != network.dim() {
        return domain("bath and network sizes differ");
    }
    let modes = NormalModes::new(network)?;
    let (q2, p2) = thermal_bath_state(bath, temperature, hbar)?;
    let d = network.dim();
    let states: Vec<GaussianState> = t_grid
        .par_iter()
        .map(|&t| {
            let r = modes.propagator_rows(n, t);
            // system columns
            let sys_cols: Vec<usize> = (0..n).chain(d..d + n).collect();
            let rs = DMatrix::from_fn(2 * n, 2 * n, |i, j| r[(i, sys_cols[j])]);
            let mean = &rs * system_initial.mean();
            let mut cov = &rs * system_initial.cov() * rs.transpose();
            for j in 0..bath.modes.len() {
                let (cq, cp) = (n + j, d + n + j);
                for a in 0..2 * n {
                    let (ra_q, ra_p) = (r[(a, cq)], r[(a, cp)]);
                    for b in 0..2 * n {
                        cov[(a, b)] += ra_q * q2[j] * r[(b, cq)] + ra_p * p2[j] * r[(b, cp)];
                    }
                }
            }
            GaussianState::from_parts_unchecked(mean, cov)
        })
        .collect();
    Trajectory::new(t_grid.to_vec(), states)
}

/// Full network state at `t` (for conservation checks).
pub fn full_evolution(network: &NetworkHamiltonian, initial: &GaussianState, t: f64) -> Result<GaussianState> {
    if initial.n_modes() != network.dim() {
        return domain("initial state size differs from the network");
    }
    let modes = NormalModes::new(network)?;
    Ok(initial.congruence(&modes.propagator(t)))
}

/// Per-time deviations between two trajectories on a shared grid. All
/// deviations are sup-norms relative to the sup-norm of the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub times: Vec<f64>,
    pub covariance: Vec<f64>,
    pub collective: Vec<f64>,
    pub relative: Vec<f64>,
    /// Only times `<= window_end` enter the maxima.
    pub window_end: f64,
    pub max_covariance: f64,
    pub max_collective: f64,
    pub max_relative: f64,
    pub worst_time: f64,
}

impl ComparisonReport {
    pub fn passes(&self, tolerance: f64, relative_tolerance: f64) -> bool {
        self.max_covariance <= tolerance && self.max_relative <= relative_tolerance
    }
}

fn rel_sup(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let diff = (a - b).amax();
    let scale = b.amax();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Compares a master-equation trajectory with a reference one.
pub fn compare(
    master: &Trajectory,
    oracle: &Trajectory,
    transform: &CanonicalTransform,
    window_end: Option<f64>,
) -> Result<ComparisonReport> {
    if master.len() != oracle.len()
        || master
            .times()
            .iter()
            .zip(oracle.times())
            .any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
    {
        return domain("trajectories are not on the same time grid");
    }
    let n = transform.n_osc();
    let l = transform.phase_space_matrix(Direction::Forward);
    let window_end = window_end.unwrap_or(f64::INFINITY);
    let rel_idx: Vec<usize> = (1..n).chain(n + 1..2 * n).collect();
    let mut report = ComparisonReport {
        times: master.times().to_vec(),
        covariance: Vec::with_capacity(master.len()),
        collective: Vec::with_capacity(master.len()),
        relative: Vec::with_capacity(master.len()),
        window_end,
        max_covariance: 0.0,
        max_collective: 0.0,
        max_relative: 0.0,
        worst_time: 0.0,
    };
    for (k, (m, o)) in master.states().iter().zip(oracle.states()).enumerate() {
        if m.n_modes() != n || o.n_modes() != n {
            return domain("state size differs from the transform");
        }
        let cov = rel_sup(m.cov(), o.cov());
        let mt = l.clone() * m.cov() * l.transpose();
        let ot = l.clone() * o.cov() * l.transpose();
        let com_idx = [0, n];
        let pick = |c: &DMatrix<f64>, idx: &[usize]| DMatrix::from_fn(idx.len(), idx.len(), |i, j| c[(idx[i], idx[j])]);
        let col = rel_sup(&pick(&mt, &com_idx), &pick(&ot, &com_idx));
        let rel = rel_sup(&pick(&mt, &rel_idx), &pick(&ot, &rel_idx));
        let t = report.times[k];
        if t <= window_end {
            if cov > report.max_covariance {
                report.max_covariance = cov;
                report.worst_time = t;
            }
            report.max_collective = report.max_collective.max(col);
            report.max_relative = report.max_relative.max(rel);
        }
        report.covariance.push(cov);
        report.collective.push(col);
        report.relative.push(rel);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{dissipation_kernel, CutoffShape};

    fn bath(n_modes: usize, omega_max: f64) -> BathSpec {
        let model = SpectralModel::ohmic(0.05, 1.0, 5.0, CutoffShape::Exponential).unwrap();
        discretize_bath(&model, n_modes, omega_max, CombKind::Uniform).unwrap()
    }

    #[test]
    fn comb_kernel_converges_to_continuum() {
        let cutoff = 5.0;
        let model = SpectralModel::ohmic(0.05, 1.0, cutoff, CutoffShape::Exponential).unwrap();
        let b = discretize_bath(&model, 200, 40.0, CombKind::Uniform).unwrap();
        let discrete = b.model();
        let scale = (1..100)
            .map(|k| dissipation_kernel(&model, k as f64 * 0.1 / cutoff).unwrap().abs())
            .fold(0.0, f64::max);
        for k in 1..100 {
            let s = k as f64 * 0.1 / cutoff;
            let exact = dissipation_kernel(&model, s).unwrap();
            let comb = dissipation_kernel(&discrete, s).unwrap();
            assert!((exact - comb).abs() < 0.01 * scale, "s={s}");
        }
    }

    #[test]
    fn decoupled_bath_leaves_system_unitary() {
        let b = BathSpec::new(vec![
            BathMode {
                coupling: 0.0,
                mass: 1.0,
                frequency: 1.3,
            };
            3
        ])
        .unwrap();
        let p = SystemParams::new(1, 1.0, 1.0, 1.0);
        let net = NetworkHamiltonian::build(&p, &QuadraticPotential::none(1), &b).unwrap();
        let init = GaussianState::squeezed(&[0.5], &[0.3], 1.0, 1.0, 1.0).unwrap();
        let t = 1.7f64;
        let traj = exact_reduced_evolution(&net, &b, &init, Temperature::Finite { beta: 1.0 }, 1.0, &[t]).unwrap();
        let (c, s) = (t.cos(), t.sin());
        let exact = init.congruence(&DMatrix::from_row_slice(2, 2, &[c, s, -s, c]));
        assert!((traj.last().cov() - exact.cov()).amax() < 1e-12);
        assert!((traj.last().mean() - exact.mean()).amax() < 1e-12);
    }

    #[test]
    fn single_mode_exchange() {
        // resonant pair with coupling g: normal modes √(1 ± g)
        let g = 0.2;
        let b = BathSpec::new(vec![BathMode {
            coupling: g,
            mass: 1.0,
            frequency: 1.0,
        }])
        .unwrap();
        let mut p = SystemParams::new(1, 1.0, 1.0, 1.0);
        p.counterterm = false;
        let net = NetworkHamiltonian::build(&p, &QuadraticPotential::none(1), &b).unwrap();
        let modes = NormalModes::new(&net).unwrap();
        let mut f: Vec<f64> = modes.frequencies().iter().copied().collect();
        f.sort_by(f64::total_cmp);
        assert!((f[0] - (1.0 - g).sqrt()).abs() < 1e-14);
        assert!((f[1] - (1.0 + g).sqrt()).abs() < 1e-14);
        // x_s = ½(cos ω₊t + cos ω₋t), x_b = ½(cos ω₊t − cos ω₋t)
        let full = GaussianState::new(DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]), DMatrix::identity(4, 4)).unwrap();
        for t in [0.7, 5.0, 23.0] {
            let m = full_evolution(&net, &full, t).unwrap().mean().clone();
            let (lo, hi) = ((f[0] * t).cos(), (f[1] * t).cos());
            assert!((m[0] - 0.5 * (lo + hi)).abs() < 1e-12);
            assert!((m[1] - 0.5 * (hi - lo)).abs() < 1e-12);
        }
    }

    #[test]
    fn network_energy_and_spectrum_conserved() {
        let b = bath(40, 10.0);
        let p = SystemParams::new(2, 1.0, 1.0, 1.0);
        let net = NetworkHamiltonian::build(&p, &QuadraticPotential::chain(2, 0.3).unwrap(), &b).unwrap();
        let sys = GaussianState::squeezed(&[0.3, -0.1], &[1.0, 0.5], 1.0, 1.0, 1.0).unwrap();
        let init = product_initial_state(&sys, &b, Temperature::Finite { beta: 2.0 }, 1.0).unwrap();
        let e0 = net.energy(&init);
        let nu0 = init.symplectic_eigenvalues().unwrap();
        for t in [0.5, 3.0, 11.0] {
            let st = full_evolution(&net, &init, t).unwrap();
            assert!((net.energy(&st) - e0).abs() < 1e-10 * e0.abs());
            let nu = st.symplectic_eigenvalues().unwrap();
            for (a, b) in nu.iter().zip(&nu0) {
                assert!((a - b).abs() < 1e-10 * b, "t={t}");
            }
        }
    }

    #[test]
    fn reduced_evolution_matches_full_marginal() {
        let b = bath(30, 10.0);
        let p = SystemParams::new(2, 1.0, 1.0, 1.0);
        let net = NetworkHamiltonian::build(&p, &QuadraticPotential::none(2), &b).unwrap();
        let sys = GaussianState::coherent(&[0.3, -0.1], &[1.0, 0.5], 1.0, 1.0, 1.0).unwrap();
        let temp = Temperature::Finite { beta: 1.0 };
        let traj = exact_reduced_evolution(&net, &b, &sys, temp, 1.0, &[2.5]).unwrap();
        let full = full_evolution(&net, &product_initial_state(&sys, &b, temp, 1.0).unwrap(), 2.5).unwrap();
        let d = net.dim();
        let marg = full.marginal(&[0, 1]).unwrap();
        assert_eq!(d, 32);
        assert!((marg.cov() - traj.last().cov()).amax() < 1e-12);
        assert!((marg.mean() - traj.last().mean()).amax() < 1e-12);
    }

    #[test]
    fn identical_trajectories_compare_to_zero() {
        let t = crate::transform::build_transform(2).unwrap();
        let s = GaussianState::coherent(&[0.0, 1.0], &[0.0, 0.0], 1.0, 1.0, 1.0).unwrap();
        let traj = Trajectory::new(vec![0.0, 1.0], vec![s.clone(), s]).unwrap();
        let r = compare(&traj, &traj, &t, None).unwrap();
        assert_eq!((r.max_covariance, r.max_collective, r.max_relative), (0.0, 0.0, 0.0));
    }
}
