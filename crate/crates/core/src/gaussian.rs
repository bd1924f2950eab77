//! Gaussian states of `n` oscillators described by first and second moments.
//!
//! Phase-space ordering is `(x_1 … x_n, P_1 … P_n)`; the covariance holds
//! symmetrised central moments `½⟨{Δξ_a, Δξ_b}⟩`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{domain, Error, Result};

pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// Standard symplectic form `[[0, I], [-I, 0]]` for `n` modes.
pub fn symplectic_form(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Symplectic eigenvalues of a positive-definite covariance, ascending.
///
/// `B = Σ^{1/2} J Σ^{1/2}` is antisymmetric with eigenvalues `±iν_k`, so its
/// singular values are the `ν_k`, each twice.
pub fn symplectic_eigenvalues(cov: &DMatrix<f64>) -> Result<Vec<f64>> {
    let dim = cov.nrows();
    if dim % 2 != 0 || cov.ncols() != dim {
        return domain("covariance must be square with even dimension");
    }
    let n = dim / 2;
    let eig = SymmetricEigen::new(cov.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
        return Err(Error::Numeric(
            "covariance is not positive definite; symplectic spectrum undefined".into(),
        ));
    }
    let sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let root = &eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose();
    let b = &root * symplectic_form(n) * &root;
    let mut vals: Vec<f64> = b.singular_values().iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    Ok(vals.chunks(2).map(|pair| 0.5 * (pair[0] + pair[1])).collect())
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 || dim % 2 != 0 {
            return domain("mean vector must have positive even length 2N");
        }
        if cov.nrows() != dim || cov.ncols() != dim {
            return domain(format!("covariance must be {dim}x{dim}"));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return domain("state has non-finite entries");
        }
        let scale = cov.amax().max(1.0);
        let asym = (&cov - cov.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return domain(format!("covariance not symmetric (deviation {asym:e})"));
        }
        let mut cov = cov;
        symmetrize(&mut cov);
        Ok(Self { mean, cov })
    }

    /// Product of ground states of oscillators with the given masses,
    /// frequency and displacements.
    pub fn coherent(
        positions: &[f64],
        momenta: &[f64],
        mass: f64,
        omega: f64,
        hbar: f64,
    ) -> Result<Self> {
        let n = positions.len();
        if momenta.len() != n {
            return domain("position and momentum displacements differ in length");
        }
        let mut mean = DVector::zeros(2 * n);
        let mut cov = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            mean[i] = positions[i];
            mean[n + i] = momenta[i];
            cov[(i, i)] = hbar / (2.0 * mass * omega);
            cov[(n + i, n + i)] = hbar * mass * omega / 2.0;
        }
        Self::new(mean, cov)
    }

    /// Vacuum with each oscillator squeezed in position by `exp(-2 r_i)`.
    pub fn squeezed(
        squeezing: &[f64],
        positions: &[f64],
        mass: f64,
        omega: f64,
        hbar: f64,
    ) -> Result<Self> {
        let n = squeezing.len();
        let zeros = vec![0.0; n];
        let mut state = Self::coherent(positions, &zeros, mass, omega, hbar)?;
        for (i, r) in squeezing.iter().enumerate() {
            state.cov[(i, i)] *= (-2.0 * r).exp();
            state.cov[(n + i, n + i)] *= (2.0 * r).exp();
        }
        Ok(state)
    }

    pub fn n_modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub(crate) fn from_parts_unchecked(mean: DVector<f64>, mut cov: DMatrix<f64>) -> Self {
        symmetrize(&mut cov);
        Self { mean, cov }
    }

    /// `m → L m`, `Σ → L Σ Lᵀ`.
    pub fn congruence(&self, l: &DMatrix<f64>) -> Self {
        let mean = l * &self.mean;
        let cov = l * &self.cov * l.transpose();
        Self::from_parts_unchecked(mean, cov)
    }

    pub fn symplectic_eigenvalues(&self) -> Result<Vec<f64>> {
        symplectic_eigenvalues(&self.cov)
    }

    /// Smallest symplectic eigenvalue minus `ħ/2`; negative values violate
    /// the uncertainty principle.
    pub fn physicality_margin(&self, hbar: f64) -> f64 {
        match self.symplectic_eigenvalues() {
            Ok(v) => v[0] - 0.5 * hbar,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    pub fn is_physical(&self, hbar: f64, tol: f64) -> bool {
        self.physicality_margin(hbar) >= -tol
    }

    /// Marginal over the listed modes, keeping the requested order.
    pub fn marginal(&self, modes: &[usize]) -> Result<Self> {
        let n = self.n_modes();
        if modes.is_empty() || modes.iter().any(|&m| m >= n) {
            return domain("mode selection empty or out of range");
        }
        let k = modes.len();
        let idx: Vec<usize> = modes.iter().copied().chain(modes.iter().map(|m| m + n)).collect();
        let mean = DVector::from_fn(2 * k, |i, _| self.mean[idx[i]]);
        let cov = DMatrix::from_fn(2 * k, 2 * k, |i, j| self.cov[(idx[i], idx[j])]);
        Ok(Self { mean, cov })
    }

    /// The 2x2 covariance block `(x_i, P_i)`.
    pub fn mode_block(&self, i: usize) -> [[f64; 2]; 2] {
        let n = self.n_modes();
        [
            [self.cov[(i, i)], self.cov[(i, n + i)]],
            [self.cov[(n + i, i)], self.cov[(n + i, n + i)]],
        ]
    }
}
