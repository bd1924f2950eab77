//! Scenario configuration: JSON schema, defaults, validation and sweeps.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::{Diagnostic, LogBase};
use crate::dynamics::{PotentialSpec, QuadraticPotential};
use crate::environment::{CutoffShape, OhmicFamily, SpectralModel, Temperature};
use crate::error::{Error, Result};
use crate::gaussian::GaussianState;
use crate::hpz::{NScaling, Order, SolverSettings, SystemParams};
use crate::oracle::CombKind;
use crate::quad::Tolerance;

/// One scenario. Every block except `n_osc` has defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_osc: usize,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default = "default_spectral")]
    pub spectral: SpectralModel,
    #[serde(default = "yes")]
    pub counterterm: bool,
    #[serde(default = "default_temperature")]
    pub temperature: Temperature,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Parameter axes expanded into separate runs by [`ScenarioConfig::expand`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepAxis>,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_spectral() -> SpectralModel {
    SpectralModel::OhmicFamily(OhmicFamily {
        gamma: 0.05,
        s_exp: 1.0,
        cutoff: 5.0,
        cutoff_shape: CutoffShape::Exponential,
    })
}

fn default_temperature() -> Temperature {
    Temperature::Finite { beta: 1.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
}

fn default_t_max() -> f64 {
    2.0 * PI
}

fn default_n_steps() -> usize {
    400
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_max: default_t_max(),
            n_steps: default_n_steps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionMethod {
    /// Centre of mass and cross terms by RK4, relative sector exactly.
    #[default]
    Factorized,
    /// RK4 on the full moment equations.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_max_intervals")]
    pub max_intervals: usize,
    #[serde(default)]
    pub n_scaling: NScaling,
    #[serde(default = "default_order")]
    pub order: Order,
    #[serde(default)]
    pub evolution: EvolutionMethod,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

fn default_rel_tol() -> f64 {
    Tolerance::default().rel
}

fn default_abs_tol() -> f64 {
    Tolerance::default().abs
}

fn default_max_intervals() -> usize {
    Tolerance::default().max_intervals
}

fn default_order() -> Order {
    Order::Fourth
}

fn default_substeps() -> usize {
    4
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            max_intervals: default_max_intervals(),
            n_scaling: NScaling::default(),
            order: default_order(),
            evolution: EvolutionMethod::default(),
            substeps: default_substeps(),
        }
    }
}

impl SolverConfig {
    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            n_scaling: self.n_scaling,
            order: self.order,
            quadrature: Tolerance {
                rel: self.rel_tol,
                abs: self.abs_tol,
                max_intervals: self.max_intervals,
            },
        }
    }
}

/// Kernels fed to the master equation during an oracle comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSource {
    /// The discretised bath, exactly as the oracle sees it.
    #[default]
    Comb,
    /// The continuum model.
    Continuum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_n_modes")]
    pub n_modes: usize,
    /// Defaults to `8 Λ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    #[serde(default)]
    pub comb: CombKind,
    #[serde(default)]
    pub kernels: KernelSource,
    /// Bound on the relative sup-norm covariance deviation.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Bound on the relative-sector deviation.
    #[serde(default = "default_relative_tolerance")]
    pub relative_tolerance: f64,
    /// Run both scalings over a short horizon and keep the closer one.
    #[serde(default = "yes")]
    pub select_scaling: bool,
    /// Selection horizon in units of `2π/Ω`.
    #[serde(default = "default_selection_periods")]
    pub selection_periods: f64,
}

fn default_n_modes() -> usize {
    400
}

fn default_tolerance() -> f64 {
    0.02
}

fn default_relative_tolerance() -> f64 {
    1e-8
}

fn default_selection_periods() -> f64 {
    0.5
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n_modes: default_n_modes(),
            omega_max: None,
            comb: CombKind::default(),
            kernels: KernelSource::default(),
            tolerance: default_tolerance(),
            relative_tolerance: default_relative_tolerance(),
            select_scaling: true,
            selection_periods: default_selection_periods(),
        }
    }
}

/// Initial system state. Empty displacement lists mean zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Displaced ground states of the bare oscillators.
    Coherent {
        #[serde(default)]
        positions: Vec<f64>,
        #[serde(default)]
        momenta: Vec<f64>,
    },
    /// Position-squeezed vacua.
    Squeezed {
        squeezing: Vec<f64>,
        #[serde(default)]
        positions: Vec<f64>,
    },
    /// Mean and covariance in `(x…, P…)` order.
    Explicit { mean: Vec<f64>, cov: Vec<Vec<f64>> },
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Coherent {
            positions: vec![],
            momenta: vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Table,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "table" => Ok(Self::Table),
            other => Err(Error::Domain(format!("unknown format '{other}' (expected csv or table)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default)]
    pub negativity_base: LogBase,
    /// Write SVG line charts next to the CSVs.
    #[serde(default)]
    pub plot: bool,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            format: OutputFormat::default(),
            diagnostics: vec![],
            negativity_base: LogBase::default(),
            plot: false,
        }
    }
}

/// A dotted path such as `spectral.gamma` and the values it takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: String,
    pub values: Vec<Value>,
}

fn config_error(path: impl Into<String>, message: impl std::fmt::Display) -> Error {
    Error::Config {
        path: path.into(),
        message: message.to_string(),
    }
}

/// Re-labels a library error with the config path it came from.
fn at<T>(path: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Domain(m) | Error::Numeric(m) | Error::Consistency(m) => config_error(path, m),
        other => other,
    })
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_error(path, format!("must be positive and finite, got {v}")))
    }
}

/// Parses and validates one scenario.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_error(if path == "." { "<root>".into() } else { path }, e.into_inner())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ScenarioConfig {
    /// Defaults everywhere except `n_osc`.
    pub fn with_n_osc(n_osc: usize) -> Self {
        parse_config(&format!("{{\"n_osc\": {n_osc}}}")).expect("defaults are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_osc == 0 {
            return Err(config_error("n_osc", "must be >= 1"));
        }
        positive("mass", self.mass)?;
        positive("omega", self.omega)?;
        positive("hbar", self.hbar)?;
        at("potential", self.potential.build(self.n_osc))?;
        match &self.spectral {
            SpectralModel::OhmicFamily(f) => {
                if !(f.gamma >= 0.0) || !f.gamma.is_finite() {
                    return Err(config_error("spectral.gamma", format!("must be >= 0, got {}", f.gamma)));
                }
                positive("spectral.cutoff", f.cutoff)?;
                positive("spectral.s_exp", f.s_exp)?;
                at("spectral", f.validate())?;
            }
            SpectralModel::Discrete { modes } => {
                if modes.is_empty() {
                    return Err(config_error("spectral.modes", "needs at least one mode"));
                }
                for (j, m) in modes.iter().enumerate() {
                    positive(&format!("spectral.modes[{j}].frequency"), m.frequency)?;
                    positive(&format!("spectral.modes[{j}].mass"), m.mass)?;
                    if !m.coupling.is_finite() {
                        return Err(config_error(format!("spectral.modes[{j}].coupling"), "must be finite"));
                    }
                }
            }
        }
        match self.temperature {
            Temperature::Finite { beta } | Temperature::Classical { beta } => positive("temperature.beta", beta)?,
            Temperature::Zero => {}
        }
        positive("time.t_max", self.time.t_max)?;
        if self.time.n_steps < 2 {
            return Err(config_error("time.n_steps", "must be >= 2"));
        }
        positive("solver.rel_tol", self.solver.rel_tol)?;
        positive("solver.abs_tol", self.solver.abs_tol)?;
        if self.solver.max_intervals == 0 {
            return Err(config_error("solver.max_intervals", "must be >= 1"));
        }
        if self.solver.substeps == 0 {
            return Err(config_error("solver.substeps", "must be >= 1"));
        }
        if self.oracle.n_modes == 0 {
            return Err(config_error("oracle.n_modes", "must be >= 1"));
        }
        if let Some(w) = self.oracle.omega_max {
            positive("oracle.omega_max", w)?;
        }
        positive("oracle.tolerance", self.oracle.tolerance)?;
        positive("oracle.relative_tolerance", self.oracle.relative_tolerance)?;
        positive("oracle.selection_periods", self.oracle.selection_periods)?;
        self.initial_state()?;
        for (k, axis) in self.sweep.iter().enumerate() {
            if axis.values.is_empty() {
                return Err(config_error(format!("sweep[{k}].values"), "must not be empty"));
            }
            if axis.parameter.is_empty() || axis.parameter.starts_with("sweep") {
                return Err(config_error(format!("sweep[{k}].parameter"), "invalid parameter path"));
            }
        }
        Ok(())
    }

    pub fn system_params(&self) -> SystemParams {
        SystemParams {
            n_osc: self.n_osc,
            mass: self.mass,
            omega: self.omega,
            hbar: self.hbar,
            counterterm: self.counterterm,
        }
    }

    pub fn potential(&self) -> Result<QuadraticPotential> {
        at("potential", self.potential.build(self.n_osc))
    }

    /// Upper edge of the oracle's comb.
    pub fn omega_max(&self) -> f64 {
        self.oracle.omega_max.unwrap_or_else(|| match &self.spectral {
            SpectralModel::OhmicFamily(f) => 8.0 * f.cutoff,
            SpectralModel::Discrete { modes } => modes.iter().map(|m| m.frequency).fold(0.0, f64::max),
        })
    }

    pub fn initial_state(&self) -> Result<GaussianState> {
        let n = self.n_osc;
        let fill = |path: &str, v: &[f64]| -> Result<Vec<f64>> {
            match v.len() {
                0 => Ok(vec![0.0; n]),
                k if k == n => Ok(v.to_vec()),
                k => Err(config_error(path, format!("expected {n} entries, got {k}"))),
            }
        };
        let state = match &self.initial {
            InitialConfig::Coherent { positions, momenta } => GaussianState::coherent(
                &fill("initial.positions", positions)?,
                &fill("initial.momenta", momenta)?,
                self.mass,
                self.omega,
                self.hbar,
            ),
            InitialConfig::Squeezed { squeezing, positions } => {
                if squeezing.len() != n {
                    return Err(config_error(
                        "initial.squeezing",
                        format!("expected {n} entries, got {}", squeezing.len()),
                    ));
                }
                GaussianState::squeezed(squeezing, &fill("initial.positions", positions)?, self.mass, self.omega, self.hbar)
            }
            InitialConfig::Explicit { mean, cov } => {
                if mean.len() != 2 * n {
                    return Err(config_error("initial.mean", format!("expected {} entries", 2 * n)));
                }
                if cov.len() != 2 * n || cov.iter().any(|r| r.len() != 2 * n) {
                    return Err(config_error("initial.cov", format!("expected a {0}x{0} matrix", 2 * n)));
                }
                at(
                    "initial.cov",
                    GaussianState::new(
                        DVector::from_vec(mean.clone()),
                        DMatrix::from_fn(2 * n, 2 * n, |i, j| cov[i][j]),
                    ),
                )
            }
        };
        let state = at("initial", state)?;
        if !state.is_physical(self.hbar, 1e-9 * self.hbar) {
            return Err(config_error("initial", "state violates the uncertainty principle"));
        }
        Ok(state)
    }

    /// Expands the sweep axes (outer product, first axis slowest) into
    /// labelled scenarios without sweeps. Without axes returns `self`.
    pub fn expand(&self) -> Result<Vec<(String, ScenarioConfig)>> {
        let mut base = serde_json::to_value(self).map_err(|e| config_error("<root>", e))?;
        if let Value::Object(map) = &mut base {
            map.remove("sweep");
        }
        let mut out: Vec<(String, Value)> = vec![(String::new(), base)];
        for (k, axis) in self.sweep.iter().enumerate() {
            let pointer = format!("/{}", axis.parameter.replace('.', "/"));
            let mut next = Vec::with_capacity(out.len() * axis.values.len());
            for (label, value) in &out {
                for v in &axis.values {
                    let mut doc = value.clone();
                    match doc.pointer_mut(&pointer) {
                        Some(slot) => *slot = v.clone(),
                        None => set_missing(&mut doc, &axis.parameter, v.clone())
                            .ok_or_else(|| config_error(format!("sweep[{k}].parameter"), "no such parameter"))?,
                    }
                    let tag = format!("{}={}", axis.parameter, v);
                    let label = if label.is_empty() { tag } else { format!("{label},{tag}") };
                    next.push((label, doc));
                }
            }
            out = next;
        }
        out.into_iter()
            .map(|(label, doc)| {
                let cfg = parse_config(&doc.to_string()).map_err(|e| match e {
                    Error::Config { path, message } => config_error(path, format!("{message} (sweep point {label})")),
                    other => other,
                })?;
                Ok((label, cfg))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Inserts `value` at a dotted path whose parent object exists.
fn set_missing(doc: &mut Value, path: &str, value: Value) -> Option<()> {
    let (parent, key) = match path.rsplit_once('.') {
        Some((p, k)) => (format!("/{}", p.replace('.', "/")), k),
        None => (String::new(), path),
    };
    let obj = doc.pointer_mut(&parent)?.as_object_mut()?;
    obj.insert(key.to_string(), value);
    Some(())
}
