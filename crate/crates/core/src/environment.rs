//! Bath spectral densities and the dissipation and noise kernels they induce.
//!
//! All densities are per system oscillator: for a discrete bath
//! `I(ω) = Σ_j C_j² / (2 m_j ω_j) δ(ω − ω_j)`. The collective density seen by
//! the centre of mass, `N² I(ω)`, is formed downstream and never configured.
//!
//! Kernels:
//!
//! ```text
//! η(s) = −∫_0^∞ dω I(ω) sin(ω s)
//! ν(s) =  ∫_0^∞ dω I(ω) coth(ħωβ/2) cos(ω s)
//! ```

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quad::{self, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffShape {
    /// `e^{−ω/Λ}`
    Exponential,
    /// `Λ² / (Λ² + ω²)`
    LorentzDrude,
    /// `1` for `ω < Λ`, else `0`
    Sharp,
}

/// `I(ω) = (2γ/π) ω (ω/Λ)^{s−1} f_cut(ω/Λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OhmicFamily {
    pub gamma: f64,
    #[serde(default = "one")]
    pub s_exp: f64,
    pub cutoff: f64,
    #[serde(default = "default_shape")]
    pub cutoff_shape: CutoffShape,
}

fn one() -> f64 {
    1.0
}

fn default_shape() -> CutoffShape {
    CutoffShape::Exponential
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathMode {
    pub coupling: f64,
    pub mass: f64,
    pub frequency: f64,
}

impl BathMode {
    /// Spectral weight `C² / (2 m ω)`.
    pub fn weight(&self) -> f64 {
        self.coupling * self.coupling / (2.0 * self.mass * self.frequency)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectralModel {
    OhmicFamily(OhmicFamily),
    Discrete { modes: Vec<BathMode> },
}

/// Bath temperature. The two limits are explicit states rather than
/// extreme values of `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Temperature {
    Finite { beta: f64 },
    /// `T = 0`: `coth → 1`.
    Zero,
    /// High-temperature limit: `coth(ħωβ/2) → 2 / (ħωβ)`.
    Classical { beta: f64 },
}

impl Temperature {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Temperature::Finite { beta } | Temperature::Classical { beta } => {
                if !(beta > 0.0) || !beta.is_finite() {
                    return domain(format!("inverse temperature must be positive and finite, got {beta}"));
                }
                Ok(())
            }
            Temperature::Zero => Ok(()),
        }
    }

    /// `coth(ħωβ/2)` or its limit.
    pub fn coth_factor(&self, omega: f64, hbar: f64) -> f64 {
        match *self {
            Temperature::Finite { beta } => 1.0 / (0.5 * hbar * omega * beta).tanh(),
            Temperature::Zero => 1.0,
            Temperature::Classical { beta } => 2.0 / (hbar * omega * beta),
        }
    }

    /// `ω coth(ħωβ/2)`, regular at `ω = 0`.
    fn omega_coth(&self, omega: f64, hbar: f64) -> f64 {
        match *self {
            Temperature::Finite { beta } => {
                let x = 0.5 * hbar * beta * omega;
                let x_coth = if x < 1e-4 {
                    1.0 + x * x / 3.0
                } else {
                    x / x.tanh()
                };
                2.0 / (hbar * beta) * x_coth
            }
            Temperature::Zero => omega,
            Temperature::Classical { beta } => 2.0 / (hbar * beta),
        }
    }
}

/// Value returned by [`spectral_eval`]: a density for continuum models, or
/// the `(weight, frequency)` list of delta functions for discrete baths.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralValue {
    Density(f64),
    Weights(Vec<(f64, f64)>),
}

impl OhmicFamily {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return domain(format!("coupling strength gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.cutoff > 0.0) || !self.cutoff.is_finite() {
            return domain(format!("cutoff must be > 0, got {}", self.cutoff));
        }
        if !(self.s_exp > 0.0) || !self.s_exp.is_finite() {
            return domain(format!("spectral exponent must be > 0, got {}", self.s_exp));
        }
        if self.cutoff_shape == CutoffShape::LorentzDrude && self.s_exp != 1.0 {
            return domain("Lorentz-Drude cutoff is supported for s_exp = 1 only");
        }
        Ok(())
    }

    fn cut(&self, x: f64) -> f64 {
        match self.cutoff_shape {
            CutoffShape::Exponential => (-x).exp(),
            CutoffShape::LorentzDrude => 1.0 / (1.0 + x * x),
            CutoffShape::Sharp => {
                if x < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn density(&self, omega: f64) -> f64 {
        omega * self.density_over_omega(omega)
    }

    /// `I(ω) / ω`; finite at `ω → 0` only when `s_exp >= 1`.
    fn density_over_omega(&self, omega: f64) -> f64 {
        let x = omega / self.cutoff;
        let power = if self.s_exp == 1.0 { 1.0 } else { x.powf(self.s_exp - 1.0) };
        2.0 * self.gamma / PI * power * self.cut(x)
    }

    /// Natural magnitude `(2γ/π) Λ²` used to scale absolute tolerances.
    fn scale(&self) -> f64 {
        (2.0 * self.gamma / PI * self.cutoff * self.cutoff).max(f64::MIN_POSITIVE)
    }

    /// Upper frequency limit for quadrature.
    fn upper_limit(&self) -> f64 {
        match self.cutoff_shape {
            CutoffShape::Exponential => {
                // tail ∫_W^∞ x^s e^{-x} dx ≲ W^s e^{-W} is below 1e-16 of the total
                let mut w: f64 = 30.0;
                while self.s_exp * w.ln() - w > -38.0 {
                    w += 1.0;
                }
                w * self.cutoff
            }
            CutoffShape::Sharp => self.cutoff,
            CutoffShape::LorentzDrude => f64::INFINITY,
        }
    }

    /// Closed forms for the exponential cutoff via
    /// `∫_0^∞ ω^p e^{−(1/Λ − i s) ω} dω = Γ(p+1) (1/Λ − i s)^{−(p+1)}`.
    fn exp_transform(&self, s: f64, power: f64) -> (f64, f64) {
        let lam = self.cutoff;
        let p = power + 1.0;
        let phi = (s * lam).atan();
        let modulus = (lam * lam / (1.0 + lam * lam * s * s)).powf(0.5 * p);
        let pref = 2.0 * self.gamma / PI * lam.powf(1.0 - self.s_exp) * libm::tgamma(p) * modulus;
        (pref * (p * phi).cos(), pref * (p * phi).sin())
    }
}

impl SpectralModel {
    pub fn ohmic(gamma: f64, s_exp: f64, cutoff: f64, cutoff_shape: CutoffShape) -> Result<Self> {
        let family = OhmicFamily {
            gamma,
            s_exp,
            cutoff,
            cutoff_shape,
        };
        family.validate()?;
        Ok(SpectralModel::OhmicFamily(family))
    }

    pub fn discrete(modes: Vec<BathMode>) -> Result<Self> {
        let model = SpectralModel::Discrete { modes };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralModel::OhmicFamily(f) => f.validate(),
            SpectralModel::Discrete { modes } => {
                if modes.is_empty() {
                    return domain("discrete bath needs at least one mode");
                }
                for (j, m) in modes.iter().enumerate() {
                    if !(m.frequency > 0.0) || !(m.mass > 0.0) || !m.coupling.is_finite() {
                        return domain(format!(
                            "bath mode {j}: frequency and mass must be positive, coupling finite"
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// True when every coupling vanishes.
    pub fn is_decoupled(&self) -> bool {
        match self {
            SpectralModel::OhmicFamily(f) => f.gamma == 0.0,
            SpectralModel::Discrete { modes } => modes.iter().all(|m| m.coupling == 0.0),
        }
    }

    /// `Σ_j C_j² / (m_j ω_j²) = 2 ∫ I(ω)/ω dω`, the stiffness of the
    /// frequency-renormalisation counterterm per unit `(Σ x_i)²`.
    pub fn renormalization_stiffness(&self) -> f64 {
        match self {
            SpectralModel::OhmicFamily(f) => {
                let lam = f.cutoff;
                match f.cutoff_shape {
                    CutoffShape::Exponential => 4.0 * f.gamma / PI * lam * libm::tgamma(f.s_exp),
                    CutoffShape::LorentzDrude => 2.0 * f.gamma * lam,
                    CutoffShape::Sharp => 4.0 * f.gamma * lam / (PI * f.s_exp),
                }
            }
            SpectralModel::Discrete { modes } => modes
                .iter()
                .map(|m| m.coupling * m.coupling / (m.mass * m.frequency * m.frequency))
                .sum(),
        }
    }
}

/// Per-oscillator spectral density at `omega`.
pub fn spectral_eval(model: &SpectralModel, omega: f64) -> Result<SpectralValue> {
    if !(omega >= 0.0) {
        return domain(format!("frequency must be >= 0, got {omega}"));
    }
    Ok(match model {
        SpectralModel::OhmicFamily(f) => SpectralValue::Density(f.density(omega)),
        SpectralModel::Discrete { modes } => {
            SpectralValue::Weights(modes.iter().map(|m| (m.weight(), m.frequency)).collect())
        }
    })
}

/// Initial partition of `[0, upper]`: one piece per half oscillation, with
/// geometric grading towards `ω = 0` when the density has a fractional power
/// there.
fn partition(f: &OhmicFamily, upper: f64, s: f64) -> Vec<f64> {
    let pieces = ((upper * s / PI).ceil() as usize).clamp(8, 20_000);
    let width = upper / pieces as f64;
    let mut points = vec![0.0];
    if f.s_exp.fract() != 0.0 {
        points.extend((1..=60).rev().map(|k| width * 0.5f64.powi(k)));
    }
    points.extend((1..pieces).map(|i| width * i as f64));
    points.push(upper);
    points
}

/// `η(s)` by quadrature only, bypassing closed forms.
pub fn dissipation_kernel_quadrature(f: &OhmicFamily, s: f64, tol: Tolerance) -> Result<f64> {
    if s == 0.0 {
        return Ok(0.0);
    }
    let upper = f.upper_limit();
    if !upper.is_finite() {
        return domain("quadrature over an unbounded Lorentz-Drude density is not supported");
    }
    let tol = Tolerance {
        abs: tol.abs * f.scale(),
        ..tol
    };
    let est = quad::integrate_breakpoints(|w| f.density(w) * (w * s).sin(), &partition(f, upper, s), tol)?;
    Ok(-est.value)
}

/// `ν(s)` by quadrature only, bypassing closed forms.
pub fn noise_kernel_quadrature(
    f: &OhmicFamily,
    s: f64,
    temperature: Temperature,
    hbar: f64,
    tol: Tolerance,
) -> Result<f64> {
    check_noise_domain(f, temperature)?;
    let upper = f.upper_limit();
    if !upper.is_finite() {
        return domain("quadrature over an unbounded Lorentz-Drude density is not supported");
    }
    let thermal_scale = match temperature {
        Temperature::Zero => 1.0,
        Temperature::Finite { beta } | Temperature::Classical { beta } => 1.0 + 2.0 / (hbar * beta * f.cutoff),
    };
    let tol = Tolerance {
        abs: tol.abs * f.scale() * thermal_scale,
        ..tol
    };
    let integrand = |w: f64| {
        let weight = match temperature {
            Temperature::Zero => f.density(w),
            _ => f.density_over_omega(w) * temperature.omega_coth(w, hbar),
        };
        weight * (w * s).cos()
    };
    let est = quad::integrate_breakpoints(integrand, &partition(f, upper, s), tol)?;
    Ok(est.value)
}

fn check_noise_domain(f: &OhmicFamily, temperature: Temperature) -> Result<()> {
    temperature.validate()?;
    if temperature != Temperature::Zero && f.s_exp < 1.0 {
        return domain(format!(
            "sub-Ohmic density (s_exp = {}) at nonzero temperature: coth(ħωβ/2) I(ω) diverges as ω → 0",
            f.s_exp
        ));
    }
    if f.cutoff_shape == CutoffShape::LorentzDrude && !matches!(temperature, Temperature::Classical { .. }) {
        return domain(
            "Lorentz-Drude noise kernel is ultraviolet divergent at s = 0 unless the classical limit is used",
        );
    }
    Ok(())
}

/// Dissipation kernel `η(s)` for `s >= 0`.
///
/// Closed forms are used for the exponential and Lorentz-Drude cutoffs and
/// for discrete baths; the sharp cutoff goes through quadrature.
pub fn dissipation_kernel(model: &SpectralModel, s: f64) -> Result<f64> {
    dissipation_kernel_with(model, s, Tolerance::default())
}

pub fn dissipation_kernel_with(model: &SpectralModel, s: f64, tol: Tolerance) -> Result<f64> {
    if !(s >= 0.0) {
        return domain(format!("kernel argument must be >= 0, got {s}"));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    match model {
        SpectralModel::Discrete { modes } => Ok(-modes.iter().map(|m| m.weight() * (m.frequency * s).sin()).sum::<f64>()),
        SpectralModel::OhmicFamily(f) => {
            if f.gamma == 0.0 {
                return Ok(0.0);
            }
            match f.cutoff_shape {
                CutoffShape::Exponential => Ok(-f.exp_transform(s, f.s_exp).1),
                CutoffShape::LorentzDrude => Ok(-f.gamma * f.cutoff * f.cutoff * (-f.cutoff * s).exp()),
                CutoffShape::Sharp => dissipation_kernel_quadrature(f, s, tol),
            }
        }
    }
}

/// Noise kernel `ν(s)` for `s >= 0`.
pub fn noise_kernel(model: &SpectralModel, s: f64, temperature: Temperature, hbar: f64) -> Result<f64> {
    noise_kernel_with(model, s, temperature, hbar, Tolerance::default())
}

pub fn noise_kernel_with(
    model: &SpectralModel,
    s: f64,
    temperature: Temperature,
    hbar: f64,
    tol: Tolerance,
) -> Result<f64> {
    if !(s >= 0.0) {
        return domain(format!("kernel argument must be >= 0, got {s}"));
    }
    temperature.validate()?;
    match model {
        SpectralModel::Discrete { modes } => Ok(modes
            .iter()
            .map(|m| m.weight() * temperature.coth_factor(m.frequency, hbar) * (m.frequency * s).cos())
            .sum()),
        SpectralModel::OhmicFamily(f) => {
            check_noise_domain(f, temperature)?;
            if f.gamma == 0.0 {
                return Ok(0.0);
            }
            match (f.cutoff_shape, temperature) {
                (CutoffShape::Exponential, Temperature::Zero) => Ok(f.exp_transform(s, f.s_exp).0),
                (CutoffShape::Exponential, Temperature::Classical { beta }) => {
                    Ok(2.0 / (hbar * beta) * f.exp_transform(s, f.s_exp - 1.0).0)
                }
                (CutoffShape::LorentzDrude, Temperature::Classical { beta }) => {
                    Ok(2.0 * f.gamma * f.cutoff / (hbar * beta) * (-f.cutoff * s).exp())
                }
                _ => noise_kernel_quadrature(f, s, temperature, hbar, tol),
            }
        }
    }
}

/// Kernels sampled on the uniform grid `s_k = k h`, `k = 0..=n_steps`.
/// Between nodes callers interpolate linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    step: f64,
    eta: Vec<f64>,
    nu: Vec<f64>,
    temperature: Temperature,
}

pub fn tabulate_kernels(
    model: &SpectralModel,
    temperature: Temperature,
    hbar: f64,
    s_max: f64,
    n_steps: usize,
    tol: Tolerance,
) -> Result<KernelTable> {
    if !(s_max > 0.0) || !s_max.is_finite() {
        return domain(format!("kernel table span must be > 0, got {s_max}"));
    }
    if n_steps < 2 {
        return domain("kernel table needs at least 2 steps");
    }
    model.validate()?;
    temperature.validate()?;
    let step = s_max / n_steps as f64;
    let values: Vec<(f64, f64)> = (0..=n_steps)
        .into_par_iter()
        .map(|k| {
            let s = k as f64 * step;
            Ok((
                dissipation_kernel_with(model, s, tol)?,
                noise_kernel_with(model, s, temperature, hbar, tol)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (eta, nu) = values.into_iter().unzip();
    Ok(KernelTable {
        step,
        eta,
        nu,
        temperature,
    })
}

impl KernelTable {
    /// Builds a table from precomputed samples (`eta[0]` must be 0).
    pub fn from_samples(step: f64, eta: Vec<f64>, nu: Vec<f64>, temperature: Temperature) -> Result<Self> {
        if eta.len() != nu.len() || eta.len() < 3 {
            return domain("kernel samples must have equal length >= 3");
        }
        if eta[0] != 0.0 {
            return domain("dissipation kernel must vanish at s = 0");
        }
        if !(step > 0.0) || eta.iter().chain(&nu).any(|v| !v.is_finite()) {
            return domain("kernel table needs a positive step and finite samples");
        }
        Ok(Self {
            step,
            eta,
            nu,
            temperature,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_steps(&self) -> usize {
        self.eta.len() - 1
    }

    pub fn s_max(&self) -> f64 {
        self.step * self.n_steps() as f64
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    pub fn temperature(&self) -> Temperature {
        self.temperature
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.eta.len()).map(|k| k as f64 * self.step).collect()
    }

    fn interp(values: &[f64], step: f64, s: f64) -> Option<f64> {
        if !(s >= 0.0) {
            return None;
        }
        let x = s / step;
        let k = x.floor() as usize;
        if k + 1 >= values.len() {
            return if (x - (values.len() - 1) as f64).abs() < 1e-9 {
                values.last().copied()
            } else {
                None
            };
        }
        let frac = x - k as f64;
        Some(values[k] + frac * (values[k + 1] - values[k]))
    }

    pub fn eta_at(&self, s: f64) -> Option<f64> {
        Self::interp(&self.eta, self.step, s)
    }

    pub fn nu_at(&self, s: f64) -> Option<f64> {
        Self::interp(&self.nu, self.step, s)
    }

    /// Every `stride`-th sample.
    pub fn subsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 || self.n_steps() % stride != 0 {
            return domain(format!("stride {stride} does not divide {} steps", self.n_steps()));
        }
        Ok(Self {
            step: self.step * stride as f64,
            eta: self.eta.iter().step_by(stride).copied().collect(),
            nu: self.nu.iter().step_by(stride).copied().collect(),
            temperature: self.temperature,
        })
    }

    /// Table restricted to the first `n_steps` steps.
    pub fn truncate(&self, n_steps: usize) -> Result<Self> {
        if n_steps < 2 || n_steps > self.n_steps() {
            return domain("truncation outside table range");
        }
        Ok(Self {
            step: self.step,
            eta: self.eta[..=n_steps].to_vec(),
            nu: self.nu[..=n_steps].to_vec(),
            temperature: self.temperature,
        })
    }
}
