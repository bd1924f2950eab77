//! Observables of Gaussian states: Robertson–Schrödinger uncertainty
//! functions, purity, physicality margin and logarithmic negativity.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{domain, Error, Result};
use crate::gaussian::GaussianState;
use crate::transform::{build_transform, CanonicalTransform, Direction};

/// Tolerance on `ν_min − ħ/2`, relative to `ħ`, below which a state is
/// rejected as unphysical.
pub const PHYSICALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    #[default]
    Original,
    Transformed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeSelection {
    indices: Vec<usize>,
    frame: Frame,
}

impl ModeSelection {
    pub fn new(indices: Vec<usize>, frame: Frame) -> Result<Self> {
        if indices.is_empty() {
            return domain("mode selection is empty");
        }
        for (k, i) in indices.iter().enumerate() {
            if indices[..k].contains(i) {
                return domain(format!("mode {i} selected twice"));
            }
        }
        Ok(Self { indices, frame })
    }

    pub fn original(indices: Vec<usize>) -> Result<Self> {
        Self::new(indices, Frame::Original)
    }

    pub fn transformed(indices: Vec<usize>) -> Result<Self> {
        Self::new(indices, Frame::Transformed)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    /// Marginal of `state` over the selected modes.
    pub fn marginal(&self, state: &GaussianState) -> Result<GaussianState> {
        let n = state.n_modes();
        if let Some(i) = self.indices.iter().find(|&&i| i >= n) {
            return domain(format!("mode {i} out of range for {n} modes"));
        }
        match self.frame {
            Frame::Original => state.marginal(&self.indices),
            Frame::Transformed => in_frame(state, &build_transform(n)?).marginal(&self.indices),
        }
    }
}

fn in_frame(state: &GaussianState, frame: &CanonicalTransform) -> GaussianState {
    state.congruence(&frame.phase_space_matrix(Direction::Forward))
}

fn check_frame(state: &GaussianState, frame: &CanonicalTransform) -> Result<()> {
    if frame.n_osc() != state.n_modes() {
        return domain(format!(
            "transform is for {} oscillators, state has {}",
            frame.n_osc(),
            state.n_modes()
        ));
    }
    Ok(())
}

fn block_det(b: [[f64; 2]; 2]) -> f64 {
    b[0][0] * b[1][1] - b[0][1] * b[1][0]
}

/// `⟨ΔX̃²⟩⟨ΔP̃²⟩ − ⟨ΔX̃ΔP̃⟩²` of transformed mode `mode`, in units of `(ħ/2)²`.
pub fn uncertainty_function(state: &GaussianState, frame: &CanonicalTransform, mode: usize, hbar: f64) -> Result<f64> {
    check_frame(state, frame)?;
    if mode >= state.n_modes() {
        return domain(format!("mode {mode} out of range"));
    }
    let t = in_frame(state, frame);
    Ok(block_det(t.mode_block(mode)) / (0.25 * hbar * hbar))
}

/// Uncertainty functions of every transformed mode, COM first.
pub fn uncertainty_factors(state: &GaussianState, frame: &CanonicalTransform, hbar: f64) -> Result<Vec<f64>> {
    check_frame(state, frame)?;
    let t = in_frame(state, frame);
    Ok((0..t.n_modes())
        .map(|i| block_det(t.mode_block(i)) / (0.25 * hbar * hbar))
        .collect())
}

pub fn total_uncertainty(state: &GaussianState, frame: &CanonicalTransform, hbar: f64) -> Result<f64> {
    Ok(uncertainty_factors(state, frame, hbar)?.iter().product())
}

/// `(ħ/2)^k / √det Σ` of the selected `k`-mode marginal.
pub fn purity(state: &GaussianState, selection: &ModeSelection, hbar: f64) -> Result<f64> {
    let m = selection.marginal(state)?;
    ensure_physical(&m, hbar)?;
    let k = m.n_modes() as i32;
    let det = m.cov().determinant();
    Ok((0.5 * hbar).powi(k) / det.sqrt())
}

pub fn physicality_margin(state: &GaussianState, hbar: f64) -> f64 {
    state.physicality_margin(hbar)
}

fn ensure_physical(state: &GaussianState, hbar: f64) -> Result<()> {
    let margin = state.physicality_margin(hbar);
    if margin < -PHYSICALITY_TOL * hbar {
        return Err(Error::Numeric(format!(
            "state violates the uncertainty principle (margin {margin:e})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

/// Logarithmic negativity between two disjoint selections, computed on
/// their joint marginal from the partially transposed spectrum.
pub fn log_negativity(
    state: &GaussianState,
    partition: (&ModeSelection, &ModeSelection),
    hbar: f64,
    base: LogBase,
) -> Result<f64> {
    let (a, b) = partition;
    if a.frame != b.frame {
        return domain("both sides of the partition must use the same frame");
    }
    if a.indices.iter().any(|i| b.indices.contains(i)) {
        return domain("partition sides overlap");
    }
    let joint = ModeSelection::new(a.indices.iter().chain(&b.indices).copied().collect(), a.frame)?;
    let m = joint.marginal(state)?;
    ensure_physical(&m, hbar)?;
    let k = m.n_modes();
    let na = a.indices.len();
    // time reversal on side B: P → −P
    let flip = DMatrix::from_fn(2 * k, 2 * k, |i, j| {
        if i != j {
            0.0
        } else if i >= k + na {
            -1.0
        } else {
            1.0
        }
    });
    let nu = m.congruence(&flip).symplectic_eigenvalues()?;
    let e: f64 = nu.iter().map(|v| (-(2.0 * v / hbar).ln()).max(0.0)).sum();
    Ok(match base {
        LogBase::Natural => e,
        LogBase::Two => e / std::f64::consts::LN_2,
    })
}

/// Per-time diagnostic columns selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    /// `U_1 … U_N` in the transformed frame and their product.
    Uncertainty,
    /// Purity of the whole system.
    Purity,
    /// Negativity between oscillator 1 and the rest.
    Negativity,
    /// `ν_min − ħ/2`.
    Physicality,
}

impl FromStr for Diagnostic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uncertainty" => Ok(Self::Uncertainty),
            "purity" => Ok(Self::Purity),
            "negativity" => Ok(Self::Negativity),
            "physicality" => Ok(Self::Physicality),
            other => domain(format!(
                "unknown diagnostic '{other}' (expected uncertainty, purity, negativity, physicality)"
            )),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uncertainty => "uncertainty",
            Self::Purity => "purity",
            Self::Negativity => "negativity",
            Self::Physicality => "physicality",
        })
    }
}

/// Parses `uncertainty,purity,…`.
pub fn parse_diagnostics(list: &str) -> Result<Vec<Diagnostic>> {
    let mut out = Vec::new();
    for item in list.split(',').filter(|s| !s.trim().is_empty()) {
        let d: Diagnostic = item.parse()?;
        if !out.contains(&d) {
            out.push(d);
        }
    }
    Ok(out)
}

/// Column headers and one row per trajectory sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn diagnostic_table(traj: &Trajectory, which: &[Diagnostic], hbar: f64, base: LogBase) -> Result<DiagnosticTable> {
    let n = match traj.states().first() {
        Some(s) => s.n_modes(),
        None => {
            return Ok(DiagnosticTable {
                headers: vec![],
                rows: vec![],
            })
        }
    };
    let frame = build_transform(n)?;
    let mut headers = Vec::new();
    for d in which {
        match d {
            Diagnostic::Uncertainty => {
                headers.extend((1..=n).map(|i| format!("U_{i}")));
                headers.push("U_total".into());
            }
            Diagnostic::Purity => headers.push("purity".into()),
            Diagnostic::Negativity if n >= 2 => headers.push("log_negativity".into()),
            Diagnostic::Negativity => {}
            Diagnostic::Physicality => headers.push("physicality_margin".into()),
        }
    }
    let all = ModeSelection::original((0..n).collect())?;
    let left = ModeSelection::original(vec![0])?;
    let right = ModeSelection::original((1..n).collect()).ok();
    let mut rows = Vec::with_capacity(traj.len());
    for state in traj.states() {
        let mut row = Vec::with_capacity(headers.len());
        for d in which {
            match d {
                Diagnostic::Uncertainty => {
                    let u = uncertainty_factors(state, &frame, hbar)?;
                    let total = u.iter().product();
                    row.extend(u);
                    row.push(total);
                }
                Diagnostic::Purity => row.push(purity(state, &all, hbar)?),
                Diagnostic::Negativity => {
                    if let Some(r) = &right {
                        row.push(log_negativity(state, (&left, r), hbar, base)?);
                    }
                }
                Diagnostic::Physicality => row.push(physicality_margin(state, hbar)),
            }
        }
        rows.push(row);
    }
    Ok(DiagnosticTable { headers, rows })
}
