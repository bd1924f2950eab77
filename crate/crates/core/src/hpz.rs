//! Fundamental solutions of the collective integro-differential equation and
//! the time-dependent master-equation coefficients `a, b, c, d`.
//!
//! The homogeneous equation
//!
//! ```text
//! v̈(s) + Ω_b² v(s) + μ ∫_0^s η(s−λ) v(λ) dλ = 0
//! ```
//!
//! is integrated with an exponential integrator: the harmonic part is
//! propagated exactly and the memory force, linearly interpolated over a
//! step, is accumulated with the trapezoidal rule. Because `η(0) = 0` the
//! scheme is explicit.
//!
//! Two parameter sets are supported (see [`NScaling`]). With
//! `ComReduced` the centre of mass is treated as a single oscillator of mass
//! `N M` coupled with strength `N C_j`, so `μ = 2N/M` for the per-oscillator
//! `η`, and the coefficients follow from the exact reduced propagator. With
//! `AsPrinted`, `μ = N²/M` and the coefficient integrals are evaluated
//! literally through the boundary-value functions `u₁, u₂`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{self, KernelTable, SpectralModel, Temperature};
use crate::error::{domain, Error, Result};
use crate::quad::Tolerance;

/// Which parameter set drives the collective equation and coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NScaling {
    /// Memory factor `N²/M` and the coefficient integrals with their
    /// printed `N`, `M` prefactors.
    AsPrinted,
    /// Centre-of-mass reduction: mass `N M`, density `N² I`.
    #[default]
    ComReduced,
}

impl std::str::FromStr for NScaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_printed" => Ok(NScaling::AsPrinted),
            "com_reduced" => Ok(NScaling::ComReduced),
            other => domain(format!("unknown n_scaling '{other}' (expected as_printed or com_reduced)")),
        }
    }
}

impl std::fmt::Display for NScaling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NScaling::AsPrinted => "as_printed",
            NScaling::ComReduced => "com_reduced",
        })
    }
}

/// Identical system oscillators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n_osc: usize,
    pub mass: f64,
    pub omega: f64,
    pub hbar: f64,
    /// Add `½ κ_ct (Σ x_i)²` with `κ_ct = Σ_j C_j²/(m_j ω_j²)`, cancelling the
    /// static frequency shift induced by the bath.
    pub counterterm: bool,
}

impl SystemParams {
    pub fn new(n_osc: usize, mass: f64, omega: f64, hbar: f64) -> Self {
        Self {
            n_osc,
            mass,
            omega,
            hbar,
            counterterm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_osc == 0 {
            return domain("n_osc must be >= 1");
        }
        for (name, v) in [("mass", self.mass), ("omega", self.omega), ("hbar", self.hbar)] {
            if !(v > 0.0) || !v.is_finite() {
                return domain(format!("{name} must be positive and finite, got {v}"));
            }
        }
        Ok(())
    }

    /// Counterterm stiffness per unit `(Σ x)²`, or 0 when disabled.
    pub fn counterterm_stiffness(&self, model: &SpectralModel) -> f64 {
        if self.counterterm {
            model.renormalization_stiffness()
        } else {
            0.0
        }
    }
}

/// Parameters of the single collective equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectiveParams {
    /// Mass multiplying the collective momentum: `N M` or `M`.
    pub mass: f64,
    /// Squared bare frequency including the counterterm shift.
    pub omega_b2: f64,
    /// `μ` in front of the memory integral over the per-oscillator `η`.
    pub memory_factor: f64,
}

impl CollectiveParams {
    pub fn new(params: &SystemParams, counterterm_stiffness: f64, scaling: NScaling) -> Self {
        let n = params.n_osc as f64;
        let omega_b2 = params.omega * params.omega + n * counterterm_stiffness / params.mass;
        match scaling {
            NScaling::ComReduced => Self {
                mass: n * params.mass,
                omega_b2,
                memory_factor: 2.0 * n / params.mass,
            },
            NScaling::AsPrinted => Self {
                mass: params.mass,
                omega_b2,
                memory_factor: n * n / params.mass,
            },
        }
    }
}

/// Solutions `v₁` (`v=1, v̇=0`) and `v₂` (`v=0, v̇=1`) on a uniform grid,
/// with derivatives and the memory integrals `m_i = μ ∫ η v_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalSolutions {
    step: f64,
    v: [Vec<f64>; 2],
    v_dot: [Vec<f64>; 2],
    v_ddot: [Vec<f64>; 2],
    memory: [Vec<f64>; 2],
    collective: CollectiveParams,
}

/// Integrals of `τ^p sin(ωτ)/ω` and `τ^p cos(ωτ)` over `[0, h]`, `p = 0, 1`.
struct StepWeights {
    cos: f64,
    sin_over_w: f64,
    w_sin: f64,
    s0: f64,
    s1: f64,
    c0: f64,
    c1: f64,
}

impl StepWeights {
    fn new(omega: f64, h: f64) -> Self {
        let x = omega * h;
        let (sin, cos) = x.sin_cos();
        let x2 = x * x;
        let (sinc, one_minus_cos, s1, c1) = if x < 1e-2 {
            (
                1.0 - x2 / 6.0 + x2 * x2 / 120.0,
                x2 / 2.0 - x2 * x2 / 24.0 + x2 * x2 * x2 / 720.0,
                1.0 / 3.0 - x2 / 30.0 + x2 * x2 / 840.0 - x2 * x2 * x2 / 45360.0,
                0.5 - x2 / 8.0 + x2 * x2 / 144.0 - x2 * x2 * x2 / 5760.0,
            )
        } else {
            let half = (0.5 * x).sin();
            (
                sin / x,
                2.0 * half * half,
                (sin - x * cos) / (x2 * x),
                (cos + x * sin - 1.0) / x2,
            )
        };
        Self {
            cos,
            sin_over_w: h * sinc,
            w_sin: omega * x * sinc,
            s0: if x < 1e-2 { h * h * one_minus_cos / x2 } else { one_minus_cos / (omega * omega) },
            s1: h * h * h * s1,
            c0: h * sinc,
            c1: h * h * c1,
        }
    }
}

const OVERFLOW_GUARD: f64 = 1e150;

/// Integrates the collective equation on `η` samples `eta[k] = η(k h)`.
pub fn solve_volterra(eta: &[f64], step: f64, collective: CollectiveParams) -> Result<FundamentalSolutions> {
    let n = eta.len();
    if n < 2 {
        return domain("need at least two kernel samples");
    }
    if !(step > 0.0) {
        return domain("step must be positive");
    }
    if !(collective.omega_b2 > 0.0) {
        return domain(format!(
            "squared bare frequency must be positive, got {}",
            collective.omega_b2
        ));
    }
    let omega = collective.omega_b2.sqrt();
    let w = StepWeights::new(omega, step);
    let mu_h = collective.memory_factor * step;

    let mut v = [vec![0.0; n], vec![0.0; n]];
    let mut v_dot = [vec![0.0; n], vec![0.0; n]];
    let mut v_ddot = [vec![0.0; n], vec![0.0; n]];
    let mut memory = [vec![0.0; n], vec![0.0; n]];
    v[0][0] = 1.0;
    v_dot[1][0] = 1.0;
    v_ddot[0][0] = -collective.omega_b2;

    for k in 0..n - 1 {
        for i in 0..2 {
            // m_{k+1} only needs v_0..v_k since η(0) = 0
            let mut acc = 0.5 * eta[k + 1] * v[i][0];
            for j in 1..=k {
                acc += eta[k + 1 - j] * v[i][j];
            }
            let m_next = mu_h * acc;
            let f0 = -memory[i][k];
            let f1 = -m_next;
            let slope = (f1 - f0) / step;
            let (x, p) = (v[i][k], v_dot[i][k]);
            let x_new = x * w.cos + p * w.sin_over_w + f1 * w.s0 - slope * w.s1;
            let p_new = -x * w.w_sin + p * w.cos + f1 * w.c0 - slope * w.c1;
            if !x_new.is_finite() || x_new.abs() > OVERFLOW_GUARD || !p_new.is_finite() {
                return Err(Error::Numeric(format!(
                    "fundamental solution {} diverged at t = {}",
                    i + 1,
                    (k + 1) as f64 * step
                )));
            }
            v[i][k + 1] = x_new;
            v_dot[i][k + 1] = p_new;
            memory[i][k + 1] = m_next;
            v_ddot[i][k + 1] = -collective.omega_b2 * x_new - m_next;
        }
    }
    Ok(FundamentalSolutions {
        step,
        v,
        v_dot,
        v_ddot,
        memory,
        collective,
    })
}

/// Tabulates `η` and solves the collective equation on `[0, t_max]`.
pub fn solve_fundamental(
    model: &SpectralModel,
    params: &SystemParams,
    scaling: NScaling,
    t_max: f64,
    n_steps: usize,
) -> Result<FundamentalSolutions> {
    params.validate()?;
    let table = environment::tabulate_kernels(model, Temperature::Zero, params.hbar, t_max, n_steps, Tolerance::default())
        .or_else(|_| {
            // the noise kernel may be undefined at T = 0; only η is needed here
            let eta = (0..=n_steps)
                .map(|k| environment::dissipation_kernel(model, k as f64 * t_max / n_steps as f64))
                .collect::<Result<Vec<_>>>()?;
            KernelTable::from_samples(t_max / n_steps as f64, eta, vec![0.0; n_steps + 1], Temperature::Zero)
        })?;
    let collective = CollectiveParams::new(params, params.counterterm_stiffness(model), scaling);
    solve_volterra(table.eta(), table.step(), collective)
}

impl FundamentalSolutions {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.v[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.v[0].is_empty()
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.step).collect()
    }

    pub fn collective(&self) -> CollectiveParams {
        self.collective
    }

    pub fn v1(&self) -> &[f64] {
        &self.v[0]
    }

    pub fn v2(&self) -> &[f64] {
        &self.v[1]
    }

    pub fn v1_dot(&self) -> &[f64] {
        &self.v_dot[0]
    }

    pub fn v2_dot(&self) -> &[f64] {
        &self.v_dot[1]
    }

    pub fn v1_ddot(&self) -> &[f64] {
        &self.v_ddot[0]
    }

    pub fn v2_ddot(&self) -> &[f64] {
        &self.v_ddot[1]
    }

    /// `μ ∫_0^{t_k} η(t_k − s) v_i(s) ds` for `i = 1, 2`.
    pub fn memory(&self, i: usize) -> &[f64] {
        &self.memory[i - 1]
    }

    /// `v₁ v̇₂ − v₂ v̇₁` at node `k`.
    pub fn determinant(&self, k: usize) -> f64 {
        self.v[0][k] * self.v_dot[1][k] - self.v[1][k] * self.v_dot[0][k]
    }

    /// Every `stride`-th node.
    /// `(4 fine − coarse)/3` on the coarse grid, where `fine` has half the step.
    fn extrapolate(&self, fine: &Self) -> Self {
        let combine = |c: &Vec<f64>, f: &Vec<f64>| -> Vec<f64> {
            c.iter().enumerate().map(|(k, c)| (4.0 * f[2 * k] - c) / 3.0).collect()
        };
        let pair = |c: &[Vec<f64>; 2], f: &[Vec<f64>; 2]| [combine(&c[0], &f[0]), combine(&c[1], &f[1])];
        Self {
            step: self.step,
            v: pair(&self.v, &fine.v),
            v_dot: pair(&self.v_dot, &fine.v_dot),
            v_ddot: pair(&self.v_ddot, &fine.v_ddot),
            memory: pair(&self.memory, &fine.memory),
            collective: self.collective,
        }
    }

    fn node_of(&self, t: f64) -> Result<usize> {
        let x = t / self.step;
        let k = x.round();
        if !(t >= 0.0) || (x - k).abs() > 1e-9 * x.max(1.0) || k as usize >= self.len() {
            return domain(format!("t = {t} is not a node of the solution grid"));
        }
        Ok(k as usize)
    }

    /// Cubic Hermite interpolation of `(y, ẏ)` samples.
    fn hermite(&self, y: &[f64], dy: &[f64], s: f64) -> Result<f64> {
        let h = self.step;
        let x = s / h;
        let last = (self.len() - 1) as f64;
        if !(x >= -1e-12) || x > last + 1e-9 {
            return domain(format!("argument {s} outside the solution grid"));
        }
        let x = x.clamp(0.0, last);
        let k = (x.floor() as usize).min(self.len() - 2);
        let u = x - k as f64;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u),
            u * (1.0 - u) * (1.0 - u),
            u * u * (3.0 - 2.0 * u),
            u * u * (u - 1.0),
        );
        Ok(h00 * y[k] + h10 * h * dy[k] + h01 * y[k + 1] + h11 * h * dy[k + 1])
    }

    /// `v₂` between nodes.
    pub fn v2_at(&self, s: f64) -> Result<f64> {
        self.hermite(&self.v[1], &self.v_dot[1], s)
    }

    /// `v̇₂` between nodes.
    pub fn v2_dot_at(&self, s: f64) -> Result<f64> {
        self.hermite(&self.v_dot[1], &self.v_ddot[1], s)
    }

    /// True when `v₂` vanishes within half a step of node `k`.
    fn v2_vanishes_near(&self, k: usize) -> bool {
        let v2 = &self.v[1];
        let scale = v2[..=k].iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        if v2[k].abs() <= 1e-12 * scale {
            return true;
        }
        let t = k as f64 * self.step;
        let half = 0.5 * self.step;
        let lo = self.v2_at((t - half).max(0.0)).unwrap_or(v2[k]);
        let hi = self.v2_at((t + half).min((self.len() - 1) as f64 * self.step)).unwrap_or(v2[k]);
        k > 0 && (lo.signum() != v2[k].signum() || hi.signum() != v2[k].signum())
    }

    /// Newton estimate of the zero of `v₂` nearest to node `k`.
    fn nearest_v2_zero(&self, k: usize) -> f64 {
        let t = k as f64 * self.step;
        let d = self.v_dot[1][k];
        if d == 0.0 {
            t
        } else {
            t - self.v[1][k] / d
        }
    }
}

/// `u₁, u₂` on `[0, t]` with their derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementaryFunctions {
    pub t: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub u1_dot: Vec<f64>,
    pub u2_dot: Vec<f64>,
}

/// Solutions of the two-point problems `u₁(0)=1, u₁(t)=0` and
/// `u₂(0)=0, u₂(t)=1`, by superposition of `v₁, v₂`.
pub fn elementary_functions(f: &FundamentalSolutions, t: f64) -> Result<ElementaryFunctions> {
    let k = f.node_of(t)?;
    if k == 0 || f.v2_vanishes_near(k) {
        return Err(Error::Caustic {
            t,
            nearest_zero: f.nearest_v2_zero(k),
        });
    }
    let (v1, v2) = (f.v1(), f.v2());
    let (d1, d2) = (f.v1_dot(), f.v2_dot());
    let ratio = v1[k] / v2[k];
    let inv = 1.0 / v2[k];
    let mut u1: Vec<f64> = (0..=k).map(|j| v1[j] - ratio * v2[j]).collect();
    let mut u2: Vec<f64> = (0..=k).map(|j| v2[j] * inv).collect();
    u1[k] = 0.0;
    u2[k] = 1.0;
    Ok(ElementaryFunctions {
        t,
        u1,
        u2,
        u1_dot: (0..=k).map(|j| d1[j] - ratio * d2[j]).collect(),
        u2_dot: (0..=k).map(|j| d2[j] * inv).collect(),
    })
}

/// `G₁(s, τ) = v₂(s − τ)` for `s >= τ`, zero before the source.
#[derive(Debug, Clone, Copy)]
pub struct GreenFunction<'a> {
    f: &'a FundamentalSolutions,
}

pub fn green_function(f: &FundamentalSolutions) -> GreenFunction<'_> {
    GreenFunction { f }
}

impl GreenFunction<'_> {
    pub fn g1(&self, s: f64, tau: f64) -> Result<f64> {
        if s < tau {
            return Ok(0.0);
        }
        self.f.v2_at(s - tau)
    }

    /// Derivative with respect to the first argument.
    pub fn g1_prime(&self, s: f64, tau: f64) -> Result<f64> {
        if s < tau {
            return Ok(0.0);
        }
        self.f.v2_dot_at(s - tau)
    }

    /// `G₂`, read as the same retarded Green function.
    pub fn g2(&self, s: f64, tau: f64) -> Result<f64> {
        self.g1(s, tau)
    }
}

/// Richardson order of the coefficient pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Order {
    Second,
    Fourth,
}

impl TryFrom<u8> for Order {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            2 => Ok(Order::Second),
            4 => Ok(Order::Fourth),
            _ => Err(format!("order must be 2 or 4, got {v}")),
        }
    }
}

impl From<Order> for u8 {
    fn from(o: Order) -> u8 {
        match o {
            Order::Second => 2,
            Order::Fourth => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub n_scaling: NScaling,
    pub order: Order,
    pub quadrature: Tolerance,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            n_scaling: NScaling::ComReduced,
            order: Order::Fourth,
            quadrature: Tolerance::default(),
        }
    }
}

/// Where a [`CoefficientSeries`] came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub params: SystemParams,
    pub collective: CollectiveParams,
    pub temperature: Temperature,
    pub n_scaling: NScaling,
    pub order: Order,
    pub counterterm_stiffness: f64,
}

/// `a, b, c, d` on a uniform grid. Flagged samples hold `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSeries {
    step: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    caustic: Vec<bool>,
    fundamental: FundamentalSolutions,
    provenance: Provenance,
}

impl CoefficientSeries {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn t_max(&self) -> f64 {
        self.step * (self.len() - 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.step).collect()
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn caustic(&self) -> &[bool] {
        &self.caustic
    }

    pub fn fundamental(&self) -> &FundamentalSolutions {
        &self.fundamental
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// First flagged time, if any.
    pub fn first_caustic(&self) -> Option<f64> {
        self.caustic.iter().position(|&c| c).map(|k| k as f64 * self.step)
    }

    /// `(a, b, c, d)` at node `k`.
    pub fn node(&self, k: usize) -> [f64; 4] {
        [self.a[k], self.b[k], self.c[k], self.d[k]]
    }

    /// Four-point Lagrange interpolation, or linear when the series is
    /// shorter than four nodes or the wider stencil touches a flagged node.
    /// `Err(Caustic)` if a bracketing node is flagged.
    pub fn at(&self, t: f64) -> Result<[f64; 4]> {
        let x = t / self.step;
        let last = self.len() - 1;
        if !(x >= -1e-12) || x > last as f64 + 1e-9 {
            return domain(format!("t = {t} outside coefficient range"));
        }
        let x = x.clamp(0.0, last as f64);
        let k = (x.floor() as usize).min(last.saturating_sub(1));
        let frac = x - k as f64;
        let k1 = (k + 1).min(last);
        for j in [k, k1] {
            if self.caustic[j] && (j == k && frac < 1.0 || j == k1 && frac > 0.0) {
                return Err(Error::Caustic {
                    t,
                    nearest_zero: j as f64 * self.step,
                });
            }
        }
        if frac == 0.0 {
            return Ok(self.node(k));
        }
        if last >= 3 {
            let j0 = k.saturating_sub(1).min(last - 3);
            if (j0..j0 + 4).all(|j| !self.caustic[j]) {
                let u = x - j0 as f64;
                let w = [
                    -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
                    u * (u - 2.0) * (u - 3.0) / 2.0,
                    -u * (u - 1.0) * (u - 3.0) / 2.0,
                    u * (u - 1.0) * (u - 2.0) / 6.0,
                ];
                return Ok(std::array::from_fn(|i| {
                    (0..4).map(|m| w[m] * self.node(j0 + m)[i]).sum()
                }));
            }
        }
        let (lo, hi) = (self.node(k), self.node(k1));
        Ok(std::array::from_fn(|i| lo[i] + frac * (hi[i] - lo[i])))
    }

    /// Series restricted to the first `n_steps` steps.
    pub fn truncate(&self, n_steps: usize) -> Self {
        let m = (n_steps + 1).min(self.len());
        let cut = |x: &Vec<f64>| x[..m].to_vec();
        Self {
            step: self.step,
            a: cut(&self.a),
            b: cut(&self.b),
            c: cut(&self.c),
            d: cut(&self.d),
            caustic: self.caustic[..m].to_vec(),
            fundamental: self.fundamental.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Builds a series from explicit samples, for tests and synthetic
    /// studies. All samples are treated as valid.
    pub fn from_samples(
        step: f64,
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        d: Vec<f64>,
        params: SystemParams,
    ) -> Result<Self> {
        let n = a.len();
        if n < 2 || b.len() != n || c.len() != n || d.len() != n {
            return domain("coefficient samples must have equal length >= 2");
        }
        let collective = CollectiveParams::new(&params, 0.0, NScaling::ComReduced);
        let fundamental = solve_volterra(&vec![0.0; n], step, collective)?;
        Ok(Self {
            step,
            a,
            b,
            c,
            d,
            caustic: vec![false; n],
            fundamental,
            provenance: Provenance {
                params: SystemParams {
                    counterterm: false,
                    ..params
                },
                collective,
                temperature: Temperature::Zero,
                n_scaling: NScaling::ComReduced,
                order: Order::Second,
                counterterm_stiffness: 0.0,
            },
        })
    }
}

/// Trapezoid weight of node `j` on `[0, k]`.
#[inline]
fn trap(j: usize, k: usize) -> f64 {
    if j == 0 || j == k {
        0.5
    } else {
        1.0
    }
}

/// Incremental trapezoid double integral
/// `K(t_k) = ∫_0^{t_k}∫_0^{t_k} f(σ) g(σ') ν(|σ−σ'|) dσ dσ'` for all `k`.
fn double_integrals(f: &[f64], g: &[f64], nu: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    let a = |i: usize| if i == 0 { 0.5 * f[0] } else { f[i] };
    let b = |i: usize| if i == 0 { 0.5 * g[0] } else { g[i] };
    let mut s = a(0) * b(0) * nu[0];
    for k in 1..n {
        let mut rb = 0.0;
        let mut ra = 0.0;
        for j in 0..k {
            rb += b(j) * nu[k - j];
            ra += a(j) * nu[k - j];
        }
        let (ak, bk) = (a(k), b(k));
        s += ak * rb + bk * ra + ak * bk * nu[0];
        let rb_full = rb + bk * nu[0];
        let ra_full = ra + ak * nu[0];
        out[k] = h * h * (s - 0.5 * ak * rb_full - 0.5 * bk * ra_full + 0.25 * ak * bk * nu[0]);
    }
    out
}

/// `L(t_k) = ∫_0^{t_k} f(σ) ν(σ) dσ`.
fn single_integrals(f: &[f64], nu: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for k in 1..n {
        acc += 0.5 * (f[k - 1] * nu[k - 1] + f[k] * nu[k]);
        out[k] = h * acc;
    }
    out
}

struct RawSeries {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    caustic: Vec<bool>,
}

fn com_reduced_series(f: &FundamentalSolutions, table: &KernelTable, params: &SystemParams) -> RawSeries {
    let n = f.len();
    let h = f.step();
    let nn = params.n_osc as f64;
    let mc = f.collective.mass;
    let hbar = params.hbar;
    let nu_c: Vec<f64> = table.nu()[..n].iter().map(|x| nn * nn * x).collect();

    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut caustic = vec![false; n];
    let (m1, m2) = (f.memory(1), f.memory(2));
    for k in 1..n {
        let det = f.determinant(k);
        let scale = (f.v1()[k] * f.v2_dot()[k]).abs() + (f.v2()[k] * f.v1_dot()[k]).abs();
        if det.abs() <= 1e-12 * scale {
            caustic[k] = true;
            continue;
        }
        a[k] = mc * (m1[k] * f.v2_dot()[k] - m2[k] * f.v1_dot()[k]) / det;
        b[k] = (m2[k] * f.v1()[k] - m1[k] * f.v2()[k]) / det;
    }

    let (w, wd, wdd) = (f.v2(), f.v2_dot(), f.v2_ddot());
    let k_ww = double_integrals(w, w, &nu_c, h);
    let k_wwd = double_integrals(w, wd, &nu_c, h);
    let k_wdwd = double_integrals(wd, wd, &nu_c, h);
    let k_wwdd = double_integrals(w, wdd, &nu_c, h);
    let k_wdwdd = double_integrals(wd, wdd, &nu_c, h);
    let l_w = single_integrals(w, &nu_c, h);
    let l_wd = single_integrals(wd, &nu_c, h);

    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for k in 1..n {
        if caustic[k] {
            continue;
        }
        let n_xx = hbar / (mc * mc) * k_ww[k];
        let n_xp = hbar / mc * k_wwd[k];
        let n_pp = hbar * k_wdwd[k];
        let x_fp = hbar / mc * (l_w[k] + k_wwdd[k]);
        let p_fp = hbar * (l_wd[k] + k_wdwdd[k]);
        let alpha = -(mc * f.collective.omega_b2 + a[k]);
        let beta = -b[k];
        c[k] = x_fp - alpha * n_xx - beta * n_xp;
        d[k] = p_fp - alpha * n_xp - beta * n_pp;
    }
    for k in 0..n {
        if caustic[k] {
            a[k] = f64::NAN;
            b[k] = f64::NAN;
            c[k] = f64::NAN;
            d[k] = f64::NAN;
        }
    }
    RawSeries { a, b, c, d, caustic }
}

/// The printed integrals, term by term.
fn as_printed_series(f: &FundamentalSolutions, table: &KernelTable, params: &SystemParams) -> RawSeries {
    let n = f.len();
    let h = f.step();
    let nn = params.n_osc as f64;
    let m = params.mass;
    let hbar = params.hbar;
    let eta = &table.eta()[..n];
    let nu = &table.nu()[..n];
    let (v2, v2d) = (f.v2(), f.v2_dot());
    let g = |s: usize, tau: usize| if s >= tau { v2[s - tau] } else { 0.0 };
    let g_prime = |s: usize, tau: usize| if s >= tau { v2d[s - tau] } else { 0.0 };

    let rows: Vec<(f64, f64, f64, f64, bool)> = (0..n)
        .into_par_iter()
        .map(|k| {
            if k == 0 {
                return (0.0, 0.0, 0.0, 0.0, false);
            }
            let t = k as f64 * h;
            let u = match elementary_functions(f, t) {
                Ok(u) => u,
                Err(_) => return (f64::NAN, f64::NAN, f64::NAN, f64::NAN, true),
            };
            let u1_dot_t = u.u1_dot[k];
            let det_scale = (f.v1()[k] * v2d[k]).abs() + (v2[k] * f.v1_dot()[k]).abs();
            if f.determinant(k).abs() <= 1e-12 * det_scale || u1_dot_t == 0.0 {
                return (f64::NAN, f64::NAN, f64::NAN, f64::NAN, true);
            }
            let ratio = u.u2_dot[k] / u1_dot_t;
            let mut ia = 0.0;
            let mut ib = 0.0;
            for j in 0..=k {
                let w = trap(j, k) * eta[k - j];
                ia += w * (u.u2[j] - u.u1[j] * ratio);
                ib += w * u.u1[j];
            }
            let a = nn * h * ia;
            let b = nn / m * h * ib / u1_dot_t;

            let mut single_c = 0.0;
            let mut single_d = 0.0;
            for j in 0..=k {
                let w = trap(j, k) * nu[k - j];
                single_c += w * g(k, j);
                single_d += w * g_prime(k, j);
            }
            // The triple integrals pair G₂(s, τ) with τ ∈ [s, t]. G₂ is
            // retarded and v₂(0) = 0, so their integrand vanishes there.
            let c = hbar / (nn * m) * h * single_c;
            let d = hbar / nn * h * single_d;
            (a, b, c, d, false)
        })
        .collect();
    let mut out = RawSeries {
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        c: Vec::with_capacity(n),
        d: Vec::with_capacity(n),
        caustic: Vec::with_capacity(n),
    };
    for (a, b, c, d, flag) in rows {
        out.a.push(a);
        out.b.push(b);
        out.c.push(c);
        out.d.push(d);
        out.caustic.push(flag);
    }
    out
}

/// Coefficients on the grid of `f`, at the table's resolution (second
/// order). `table` must share the step of `f` and cover its horizon.
pub fn coefficients(
    f: &FundamentalSolutions,
    table: &KernelTable,
    params: &SystemParams,
    scaling: NScaling,
) -> Result<CoefficientSeries> {
    if (table.step() - f.step()).abs() > 1e-12 * f.step() || table.n_steps() + 1 < f.len() {
        return domain("kernel table and fundamental solutions must share the grid");
    }
    let raw = match scaling {
        NScaling::ComReduced => com_reduced_series(f, table, params),
        NScaling::AsPrinted => as_printed_series(f, table, params),
    };
    check_finite(&raw)?;
    Ok(CoefficientSeries {
        step: f.step(),
        a: raw.a,
        b: raw.b,
        c: raw.c,
        d: raw.d,
        caustic: raw.caustic,
        fundamental: f.clone(),
        provenance: Provenance {
            params: *params,
            collective: f.collective,
            temperature: table.temperature(),
            n_scaling: scaling,
            order: Order::Second,
            counterterm_stiffness: 0.0,
        },
    })
}

fn check_finite(raw: &RawSeries) -> Result<()> {
    for (k, flag) in raw.caustic.iter().enumerate() {
        if !flag && [raw.a[k], raw.b[k], raw.c[k], raw.d[k]].iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite coefficient at node {k}")));
        }
    }
    Ok(())
}

/// `(4 f_{h/2} − f_h) / 3` on the coarse grid.
fn richardson(coarse: CoefficientSeries, fine: &CoefficientSeries) -> CoefficientSeries {
    let n = coarse.len();
    let combine = |c: &[f64], f: &[f64]| -> Vec<f64> { (0..n).map(|k| (4.0 * f[2 * k] - c[k]) / 3.0).collect() };
    let caustic: Vec<bool> = (0..n).map(|k| coarse.caustic[k] || fine.caustic[2 * k]).collect();
    let mut out = CoefficientSeries {
        a: combine(&coarse.a, &fine.a),
        b: combine(&coarse.b, &fine.b),
        c: combine(&coarse.c, &fine.c),
        d: combine(&coarse.d, &fine.d),
        caustic,
        provenance: Provenance {
            order: Order::Fourth,
            ..coarse.provenance.clone()
        },
        ..coarse
    };
    for k in 0..n {
        if out.caustic[k] {
            out.a[k] = f64::NAN;
            out.b[k] = f64::NAN;
            out.c[k] = f64::NAN;
            out.d[k] = f64::NAN;
        }
    }
    out
}

/// Full coefficient pipeline on `[0, t_max]` with `n_steps` output steps:
/// kernel tabulation, fundamental solutions and coefficients, with an
/// extra half-step pass when fourth order is requested.
pub fn compute_coefficients(
    model: &SpectralModel,
    temperature: Temperature,
    params: &SystemParams,
    settings: &SolverSettings,
    t_max: f64,
    n_steps: usize,
) -> Result<CoefficientSeries> {
    params.validate()?;
    let refine = match settings.order {
        Order::Second => 1,
        Order::Fourth => 2,
    };
    let table = environment::tabulate_kernels(
        model,
        temperature,
        params.hbar,
        t_max,
        n_steps * refine,
        settings.quadrature,
    )?;
    coefficients_from_table(model, &table, params, settings, n_steps)
}

/// As [`compute_coefficients`] with a precomputed kernel table. The table
/// must hold `n_steps` (second order) or `2 n_steps` (fourth order) steps.
pub fn coefficients_from_table(
    model: &SpectralModel,
    table: &KernelTable,
    params: &SystemParams,
    settings: &SolverSettings,
    n_steps: usize,
) -> Result<CoefficientSeries> {
    params.validate()?;
    let stiffness = params.counterterm_stiffness(model);
    let collective = CollectiveParams::new(params, stiffness, settings.n_scaling);
    let run = |table: &KernelTable| -> Result<CoefficientSeries> {
        let f = solve_volterra(table.eta(), table.step(), collective)?;
        let mut series = coefficients(&f, table, params, settings.n_scaling)?;
        series.provenance.counterterm_stiffness = stiffness;
        Ok(series)
    };
    match settings.order {
        Order::Second => {
            if table.n_steps() != n_steps {
                return domain(format!("table has {} steps, expected {n_steps}", table.n_steps()));
            }
            run(table)
        }
        Order::Fourth => {
            if table.n_steps() != 2 * n_steps {
                return domain(format!("table has {} steps, expected {}", table.n_steps(), 2 * n_steps));
            }
            let (fine, coarse) = rayon::join(|| run(table), || run(&table.subsample(2)?));
            let (fine, coarse) = (fine?, coarse?);
            let fundamental = coarse.fundamental.extrapolate(&fine.fundamental);
            let mut out = richardson(coarse, &fine);
            out.fundamental = fundamental;
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::CutoffShape;
    use std::f64::consts::PI;

    fn params(n: usize) -> SystemParams {
        SystemParams::new(n, 1.0, 1.0, 1.0)
    }

    fn ohmic(gamma: f64, cutoff: f64) -> SpectralModel {
        SpectralModel::ohmic(gamma, 1.0, cutoff, CutoffShape::Exponential).unwrap()
    }

    #[test]
    fn undamped_solutions_are_trigonometric() {
        let f = solve_fundamental(&ohmic(0.0, 5.0), &params(3), NScaling::ComReduced, 10.0, 1000).unwrap();
        for (k, t) in f.grid().into_iter().enumerate() {
            assert!((f.v1()[k] - t.cos()).abs() < 1e-12);
            assert!((f.v2()[k] - t.sin()).abs() < 1e-12);
            assert!((f.v2_dot()[k] - t.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn initial_conditions_are_exact() {
        let f = solve_fundamental(&ohmic(0.3, 5.0), &params(2), NScaling::AsPrinted, 2.0, 50).unwrap();
        assert_eq!((f.v1()[0], f.v1_dot()[0], f.v2()[0], f.v2_dot()[0]), (1.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn weak_ohmic_damping_rate() {
        // amplitude decays like e^{-N γ t / M} in the local limit
        for n in [1usize, 2, 3] {
            let gamma = 0.01;
            let t_max = 40.0;
            let f = solve_fundamental(&ohmic(gamma, 50.0), &params(n), NScaling::ComReduced, t_max, 40_000).unwrap();
            // the counterterm restores the renormalised frequency Ω = 1
            let env = |k: usize| (f.v2()[k].powi(2) + f.v2_dot()[k].powi(2)).sqrt();
            let (k0, k1) = (10_000, 40_000);
            let rate = (env(k0) / env(k1)).ln() / (t_max * 0.75);
            let expected = n as f64 * gamma;
            assert!((rate - expected).abs() < 0.05 * expected, "n={n}: {rate} vs {expected}");
        }
    }

    #[test]
    fn elementary_function_endpoints() {
        let f = solve_fundamental(&ohmic(0.0, 5.0), &params(1), NScaling::ComReduced, 4.0, 400).unwrap();
        let t = PI / 2.0;
        let k = (t / f.step()).round() as usize;
        let u = elementary_functions(&f, k as f64 * f.step()).unwrap();
        assert_eq!((u.u1[0], u.u2[0], u.u1[k], u.u2[k]), (1.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn undamped_caustic_at_half_period() {
        let f = solve_fundamental(&ohmic(0.0, 5.0), &params(1), NScaling::ComReduced, 4.0, 400).unwrap();
        let k = (PI / f.step()).round() as usize;
        match elementary_functions(&f, k as f64 * f.step()) {
            Err(Error::Caustic { nearest_zero, .. }) => assert!((nearest_zero - PI).abs() < 1e-6),
            other => panic!("expected caustic, got {other:?}"),
        }
        let pi_half = elementary_functions(&f, 157.0 * f.step()).unwrap();
        assert!((pi_half.u2[100] - (1.0f64).sin() / (1.57f64).sin()).abs() < 1e-12);
    }

    #[test]
    fn green_function_jump_conditions() {
        let f = solve_fundamental(&ohmic(0.2, 5.0), &params(2), NScaling::ComReduced, 5.0, 500).unwrap();
        let g = green_function(&f);
        for tau in [0.0, 0.37, 2.0] {
            assert_eq!(g.g1(tau, tau).unwrap(), 0.0);
            assert_eq!(g.g1_prime(tau, tau).unwrap(), 1.0);
            assert_eq!(g.g1(tau - 0.1, tau).unwrap(), 0.0);
        }
        assert!(g.g1(7.0, 0.0).is_err());
    }

    #[test]
    fn green_function_matches_pulse_response() {
        // drive v̈ + Ω_b² v + μ∫η v = p(s) with a narrow normalised pulse at τ
        let model = ohmic(0.1, 4.0);
        let p = params(2);
        let h = 1e-3;
        let n = 6000;
        let f = solve_fundamental(&model, &p, NScaling::ComReduced, h * n as f64, n).unwrap();
        let col = f.collective();
        let eta: Vec<f64> = (0..=n).map(|k| environment::dissipation_kernel(&model, k as f64 * h).unwrap()).collect();
        let (tau, width) = (1.0, 0.01);
        let pulse = |s: f64| (-((s - tau) / width).powi(2) / 2.0).exp() / (width * (2.0 * PI).sqrt());
        // velocity Verlet with trapezoid memory
        let mut x = vec![0.0; n + 1];
        let mut v = 0.0;
        let force = |k: usize, x: &[f64]| {
            let mut m = 0.5 * eta[k] * x[0];
            for j in 1..k {
                m += eta[k - j] * x[j];
            }
            -col.omega_b2 * x[k] - col.memory_factor * h * m + pulse(k as f64 * h)
        };
        let mut acc = force(0, &x);
        for k in 0..n {
            x[k + 1] = x[k] + h * v + 0.5 * h * h * acc;
            let next = force(k + 1, &x);
            v += 0.5 * h * (acc + next);
            acc = next;
        }
        let g = green_function(&f);
        for k in (1500..=n).step_by(250) {
            let s = k as f64 * h;
            assert!((x[k] - g.g1(s, tau).unwrap()).abs() < 1e-4, "s={s}");
        }
    }

    #[test]
    fn decoupled_bath_gives_zero_coefficients() {
        for scaling in [NScaling::ComReduced, NScaling::AsPrinted] {
            let settings = SolverSettings {
                n_scaling: scaling,
                ..Default::default()
            };
            let s = compute_coefficients(
                &ohmic(0.0, 5.0),
                Temperature::Finite { beta: 1.0 },
                &params(2),
                &settings,
                2.5,
                100,
            )
            .unwrap();
            for k in 0..s.len() {
                assert_eq!(s.node(k), [0.0; 4], "{scaling} k={k}");
            }
        }
    }

    #[test]
    fn temperature_enters_only_through_diffusion() {
        let settings = SolverSettings::default();
        let model = ohmic(0.1, 5.0);
        let hot = compute_coefficients(&model, Temperature::Finite { beta: 0.5 }, &params(2), &settings, 3.0, 120).unwrap();
        let cold = compute_coefficients(&model, Temperature::Finite { beta: 5.0 }, &params(2), &settings, 3.0, 120).unwrap();
        assert_eq!(hot.a(), cold.a());
        assert_eq!(hot.b(), cold.b());
        assert_ne!(hot.c(), cold.c());
        assert_ne!(hot.d(), cold.d());
    }

    #[test]
    fn as_printed_flags_half_period_caustics() {
        let settings = SolverSettings {
            n_scaling: NScaling::AsPrinted,
            order: Order::Second,
            ..Default::default()
        };
        let s = compute_coefficients(&ohmic(0.0, 5.0), Temperature::Zero, &params(1), &settings, 4.0, 400).unwrap();
        let k = (PI / s.step()).round() as usize;
        assert!(s.caustic()[k]);
        assert!(s.a()[k].is_nan());
        assert_eq!(s.caustic().iter().filter(|&&c| c).count(), 1);
    }

    #[test]
    fn com_reduced_has_no_caustic_at_v2_zero() {
        let s = compute_coefficients(
            &ohmic(0.05, 5.0),
            Temperature::Finite { beta: 1.0 },
            &params(2),
            &SolverSettings::default(),
            8.0,
            400,
        )
        .unwrap();
        assert!(s.caustic().iter().all(|c| !c));
        assert!(s.a().iter().chain(s.b()).chain(s.c()).chain(s.d()).all(|v| v.is_finite()));
    }

    #[test]
    fn double_integral_matches_brute_force() {
        let n = 30;
        let h = 0.1;
        let f: Vec<f64> = (0..n).map(|k| (0.3 * k as f64).sin() + 0.2).collect();
        let g: Vec<f64> = (0..n).map(|k| (0.2 * k as f64).cos()).collect();
        let nu: Vec<f64> = (0..n).map(|k| (-0.1 * k as f64).exp()).collect();
        let fast = double_integrals(&f, &g, &nu, h);
        for k in 0..n {
            let mut brute = 0.0;
            for i in 0..=k {
                for j in 0..=k {
                    brute += trap(i, k) * trap(j, k) * f[i] * g[j] * nu[i.abs_diff(j)];
                }
            }
            let brute = if k == 0 { 0.0 } else { h * h * brute };
            assert!((fast[k] - brute).abs() < 1e-12, "k={k}");
        }
    }
}
