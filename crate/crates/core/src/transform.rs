//! Canonical change of coordinates from individual oscillator positions and
//! momenta `(x_i, P_i)` to the collective set `(X̃_i, P̃_i)`, where `X̃_1` is
//! the centre of mass and `P̃_1` the total momentum.
//!
//! Positions transform with `X̃ = T x`, momenta with `P̃ = S P` where
//! `S = (Tᵀ)⁻¹`. Rows of `T` are mutually orthogonal, so the quadratic part of
//! the Hamiltonian stays diagonal with effective masses `M̃_i = M / |T_i|²`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::gaussian::GaussianState;

/// Rows of `T` must have unit `|det|`, biorthogonality with `S`, and mutual
/// orthogonality to this tolerance.
pub const STRUCTURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalTransform {
    n_osc: usize,
    t_matrix: DMatrix<f64>,
    s_matrix: DMatrix<f64>,
    /// In units of the single-oscillator mass.
    eff_masses: DVector<f64>,
}

/// A phase-space point in the original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub positions: DVector<f64>,
    pub momenta: DVector<f64>,
}

impl PhasePoint {
    pub fn new(positions: DVector<f64>, momenta: DVector<f64>) -> Result<Self> {
        if positions.len() != momenta.len() {
            return domain("position and momentum vectors differ in length");
        }
        if positions.iter().chain(momenta.iter()).any(|v| !v.is_finite()) {
            return domain("phase point has non-finite entries");
        }
        Ok(Self { positions, momenta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Original `(x, P)` to collective `(X̃, P̃)`.
    Forward,
    Inverse,
}

/// Maximum deviations found by [`verify_canonical`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    pub det_deviation: f64,
    pub biorthogonality_deviation: f64,
    pub orthogonality_deviation: f64,
    /// Max absolute difference between the two forms of the quadratic
    /// Hamiltonian over the sampled points.
    pub hamiltonian_abs_deviation: f64,
    /// Same, relative to the Hamiltonian value at each point.
    pub hamiltonian_rel_deviation: f64,
    pub samples: usize,
}

impl ValidationReport {
    pub fn max_deviation(&self) -> f64 {
        self.det_deviation
            .max(self.biorthogonality_deviation)
            .max(self.orthogonality_deviation)
            .max(self.hamiltonian_abs_deviation)
    }
}

/// Recursive construction: even `N = 2k` pairs neighbours into centre-of-mass
/// and relative coordinates and recurses on the `k` pair centres; odd
/// `N = 2k + 1` extends the `2k` construction with the full centre of mass and
/// `X̃_N = (x_1 + … + x_{N-1} − (N−1) x_N) / (N−1)`.
fn position_rows(n: usize) -> DMatrix<f64> {
    if n == 1 {
        return DMatrix::identity(1, 1);
    }
    if n % 2 == 0 {
        let k = n / 2;
        let inner = position_rows(k);
        let mut t = DMatrix::zeros(n, n);
        // X̃_j = Σ_i inner[j][i] y_i with y_i = (x_{2i} + x_{2i+1}) / 2
        for j in 0..k {
            for i in 0..k {
                let c = inner[(j, i)];
                t[(j, 2 * i)] += 0.5 * c;
                t[(j, 2 * i + 1)] += 0.5 * c;
            }
        }
        for i in 0..k {
            t[(k + i, 2 * i)] = 1.0;
            t[(k + i, 2 * i + 1)] = -1.0;
        }
        t
    } else {
        let prev = position_rows(n - 1);
        let mut t = DMatrix::zeros(n, n);
        t.view_mut((0, 0), (n - 1, n - 1)).copy_from(&prev);
        let inv_n = 1.0 / n as f64;
        for c in 0..n {
            t[(0, c)] = inv_n;
        }
        let m = (n - 1) as f64;
        for c in 0..n - 1 {
            t[(n - 1, c)] = 1.0 / m;
        }
        t[(n - 1, n - 1)] = -1.0;
        t
    }
}

/// Builds the canonical transformation for `n_osc` identical oscillators.
pub fn build_transform(n_osc: usize) -> Result<CanonicalTransform> {
    if n_osc == 0 {
        return domain("number of oscillators must be at least 1");
    }
    let t_matrix = position_rows(n_osc);
    let s_matrix = t_matrix
        .transpose()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("position transform is singular".into()))?;
    let eff_masses = DVector::from_iterator(
        n_osc,
        t_matrix.row_iter().map(|row| 1.0 / row.norm_squared()),
    );
    let transform = CanonicalTransform {
        n_osc,
        t_matrix,
        s_matrix,
        eff_masses,
    };
    transform.check_structure()?;
    Ok(transform)
}

impl CanonicalTransform {
    pub fn n_osc(&self) -> usize {
        self.n_osc
    }

    pub fn t_matrix(&self) -> &DMatrix<f64> {
        &self.t_matrix
    }

    pub fn s_matrix(&self) -> &DMatrix<f64> {
        &self.s_matrix
    }

    pub fn eff_masses(&self) -> &DVector<f64> {
        &self.eff_masses
    }

    /// `|det T| − 1`.
    pub fn det_deviation(&self) -> f64 {
        (self.t_matrix.determinant().abs() - 1.0).abs()
    }

    /// Max entry of `T Sᵀ − I`.
    pub fn biorthogonality_deviation(&self) -> f64 {
        let n = self.n_osc;
        (&self.t_matrix * self.s_matrix.transpose() - DMatrix::<f64>::identity(n, n)).amax()
    }

    /// Max off-diagonal entry of `T Tᵀ`.
    pub fn orthogonality_deviation(&self) -> f64 {
        let gram = &self.t_matrix * self.t_matrix.transpose();
        let mut worst = 0.0f64;
        for i in 0..self.n_osc {
            for j in 0..self.n_osc {
                if i != j {
                    worst = worst.max(gram[(i, j)].abs());
                }
            }
        }
        worst
    }

    fn check_structure(&self) -> Result<()> {
        let checks = [
            ("|det T| - 1", self.det_deviation()),
            ("T S^T - I", self.biorthogonality_deviation()),
            ("row orthogonality", self.orthogonality_deviation()),
        ];
        for (what, dev) in checks {
            if dev > STRUCTURE_TOL {
                return Err(Error::Consistency(format!(
                    "transform for N = {}: {what} deviates by {dev:e}",
                    self.n_osc
                )));
            }
        }
        Ok(())
    }

    /// Maps a phase point to collective coordinates.
    pub fn apply(&self, point: &PhasePoint) -> Result<PhasePoint> {
        if point.positions.len() != self.n_osc {
            return domain(format!(
                "phase point has {} oscillators, transform expects {}",
                point.positions.len(),
                self.n_osc
            ));
        }
        Ok(PhasePoint {
            positions: &self.t_matrix * &point.positions,
            momenta: &self.s_matrix * &point.momenta,
        })
    }

    /// The `2N × 2N` phase-space map `diag(T, S)`, or its inverse
    /// `diag(Sᵀ, Tᵀ)`.
    pub fn phase_space_matrix(&self, direction: Direction) -> DMatrix<f64> {
        let n = self.n_osc;
        let (a, b) = match direction {
            Direction::Forward => (self.t_matrix.clone(), self.s_matrix.clone()),
            Direction::Inverse => (self.s_matrix.transpose(), self.t_matrix.transpose()),
        };
        let mut l = DMatrix::zeros(2 * n, 2 * n);
        l.view_mut((0, 0), (n, n)).copy_from(&a);
        l.view_mut((n, n), (n, n)).copy_from(&b);
        l
    }

    /// Coordinates of the difference direction `x_i − x_j` in the collective
    /// basis (zero-based indices). Solves `Tᵀ c = e_i − e_j`.
    pub fn difference_coordinates(&self, i: usize, j: usize) -> Result<DVector<f64>> {
        if i == j {
            return domain("difference coordinate needs two distinct oscillators");
        }
        if i >= self.n_osc || j >= self.n_osc {
            return domain(format!("oscillator index out of range for N = {}", self.n_osc));
        }
        let mut rhs = DVector::zeros(self.n_osc);
        rhs[i] = 1.0;
        rhs[j] = -1.0;
        self.t_matrix
            .transpose()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("singular transform".into()))
    }
}

/// Quadratic Hamiltonian `Σ P²/2M + ½ M Ω² Σ x²` in original coordinates.
fn quadratic_energy(point: &PhasePoint, mass: f64, omega: f64) -> f64 {
    point.momenta.norm_squared() / (2.0 * mass)
        + 0.5 * mass * omega * omega * point.positions.norm_squared()
}

/// Same Hamiltonian written in collective coordinates with effective masses.
fn collective_energy(t: &CanonicalTransform, point: &PhasePoint, mass: f64, omega: f64) -> f64 {
    (0..t.n_osc)
        .map(|i| {
            let m = t.eff_masses[i] * mass;
            point.momenta[i].powi(2) / (2.0 * m) + 0.5 * m * omega * omega * point.positions[i].powi(2)
        })
        .sum()
}

/// Checks determinant, biorthogonality, orthogonality and the Hamiltonian
/// identity at `samples` random phase points drawn from `seed` (ChaCha8,
/// uniform on `[-1, 1]`, unit mass and frequency).
pub fn verify_canonical(t: &CanonicalTransform, samples: usize, seed: u64) -> ValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = t.n_osc;
    let (mass, omega) = (1.0, 1.0);
    let mut abs_dev = 0.0f64;
    let mut rel_dev = 0.0f64;
    for _ in 0..samples {
        let positions = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let momenta = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let point = PhasePoint { positions, momenta };
        let direct = quadratic_energy(&point, mass, omega);
        let mapped = t.apply(&point).expect("dimension matches by construction");
        let collective = collective_energy(t, &mapped, mass, omega);
        let dev = (direct - collective).abs();
        abs_dev = abs_dev.max(dev);
        if direct > 0.0 {
            rel_dev = rel_dev.max(dev / direct);
        }
    }
    ValidationReport {
        det_deviation: t.det_deviation(),
        biorthogonality_deviation: t.biorthogonality_deviation(),
        orthogonality_deviation: t.orthogonality_deviation(),
        hamiltonian_abs_deviation: abs_dev,
        hamiltonian_rel_deviation: rel_dev,
        samples,
    }
}

/// Coefficient of `X̃_1` when `x_i − x_j` is written in the collective basis
/// (zero-based indices). Vanishes for every pair.
pub fn com_component_of_difference(t: &CanonicalTransform, i: usize, j: usize) -> Result<f64> {
    Ok(t.difference_coordinates(i, j)?[0])
}

/// Transports mean and covariance through `diag(T, S)` or its inverse.
pub fn transform_gaussian(
    state: &GaussianState,
    t: &CanonicalTransform,
    direction: Direction,
) -> Result<GaussianState> {
    if state.n_modes() != t.n_osc {
        return domain(format!(
            "state has {} modes, transform expects {}",
            state.n_modes(),
            t.n_osc
        ));
    }
    let l = t.phase_space_matrix(direction);
    Ok(state.congruence(&l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn two_oscillators_match_explicit_construction() {
        let t = build_transform(2).unwrap();
        assert_eq!(t.t_matrix(), &dmatrix![0.5, 0.5; 1.0, -1.0]);
        assert!((t.s_matrix() - dmatrix![1.0, 1.0; 0.5, -0.5]).amax() < 1e-15);
        assert_eq!(t.eff_masses().as_slice(), &[2.0, 0.5]);
    }

    #[test]
    fn single_oscillator_is_identity() {
        let t = build_transform(1).unwrap();
        assert_eq!(t.t_matrix(), &DMatrix::identity(1, 1));
        assert_eq!(t.s_matrix(), &DMatrix::identity(1, 1));
        assert_eq!(t.eff_masses()[0], 1.0);
        let report = verify_canonical(&t, 10, 0);
        assert_eq!(report.max_deviation(), 0.0);
    }

    #[test]
    fn three_oscillators_use_total_mass_for_com() {
        let t = build_transform(3).unwrap();
        let expected = [3.0, 0.5, 2.0 / 3.0];
        for (m, e) in t.eff_masses().iter().zip(expected) {
            assert!((m - e).abs() < 1e-14, "{m} vs {e}");
        }
        assert!((t.t_matrix().row(2) - dmatrix![0.5, 0.5, -1.0]).amax() < 1e-15);
        assert!((t.s_matrix().row(2) - dmatrix![1.0 / 3.0, 1.0 / 3.0, -2.0 / 3.0]).amax() < 1e-15);
    }

    #[test]
    fn four_and_five_oscillators() {
        let t4 = build_transform(4).unwrap();
        assert!((t4.eff_masses() - DVector::from_vec(vec![4.0, 1.0, 0.5, 0.5])).amax() < 1e-14);
        assert!((t4.t_matrix().row(1) - dmatrix![0.5, 0.5, -0.5, -0.5]).amax() < 1e-15);
        let t5 = build_transform(5).unwrap();
        let expected = DVector::from_vec(vec![5.0, 1.0, 0.5, 0.5, 0.8]);
        assert!((t5.eff_masses() - expected).amax() < 1e-14);
        assert!((t5.t_matrix().row(4) - dmatrix![0.25, 0.25, 0.25, 0.25, -1.0]).amax() < 1e-15);
        assert!((t5.s_matrix().row(4) - dmatrix![0.2, 0.2, 0.2, 0.2, -0.8]).amax() < 1e-15);
    }

    #[test]
    fn odd_rule_for_last_mass() {
        for n in [3usize, 7, 9, 11, 15] {
            let t = build_transform(n).unwrap();
            let last = t.eff_masses()[n - 1];
            let expected = (n as f64 - 1.0) / n as f64;
            assert!((last - expected).abs() < 1e-14, "N = {n}: {last}");
        }
    }

    #[test]
    fn first_rows_are_com_and_total_momentum() {
        for n in 1..=16 {
            let t = build_transform(n).unwrap();
            let nf = n as f64;
            assert!(t.t_matrix().row(0).iter().all(|v| (v - 1.0 / nf).abs() < 1e-15));
            assert!(t.s_matrix().row(0).iter().all(|v| (v - 1.0).abs() < 1e-13));
            assert!((t.eff_masses()[0] - nf).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_oscillators_rejected() {
        assert!(matches!(build_transform(0), Err(Error::Domain(_))));
    }

    #[test]
    fn canonical_checks_pass_for_three_and_twelve() {
        let r3 = verify_canonical(&build_transform(3).unwrap(), 100, 42);
        assert!(r3.max_deviation() < 1e-10, "{r3:?}");
        let r12 = verify_canonical(&build_transform(12).unwrap(), 200, 7);
        assert!(r12.max_deviation() < 1e-10, "{r12:?}");
        assert!(r12.hamiltonian_rel_deviation < 1e-10);
    }

    #[test]
    fn difference_of_pair_is_relative_coordinate() {
        let t = build_transform(2).unwrap();
        let c = t.difference_coordinates(0, 1).unwrap();
        assert!(c[0].abs() < 1e-15);
        assert!((c[1] - 1.0).abs() < 1e-15);
        assert!(com_component_of_difference(&build_transform(4).unwrap(), 0, 2).unwrap().abs() < 1e-14);
    }

    #[test]
    fn lemma_holds_for_all_pairs_of_nine() {
        let t = build_transform(9).unwrap();
        let mut worst = 0.0f64;
        for i in 0..9 {
            for j in 0..9 {
                if i != j {
                    worst = worst.max(com_component_of_difference(&t, i, j).unwrap().abs());
                }
            }
        }
        assert!(worst < 1e-14, "{worst:e}");
    }

    #[test]
    fn same_index_is_domain_error() {
        let t = build_transform(3).unwrap();
        assert!(matches!(com_component_of_difference(&t, 1, 1), Err(Error::Domain(_))));
    }
}
