//! Scenario orchestration: kernels → fundamental solutions → coefficients
//! → moment evolution → diagnostics, and the oracle comparison.

use std::f64::consts::PI;

use crate::config::{EvolutionMethod, KernelSource, ScenarioConfig};
use crate::diagnostics::{diagnostic_table, DiagnosticTable};
use crate::dynamics::{evolve, factorized_evolve, EvolveOptions, QuadraticPotential, Trajectory};
use crate::environment::{tabulate_kernels, KernelTable, SpectralModel, Temperature};
use crate::error::{domain, Result};
use crate::gaussian::GaussianState;
use crate::hpz::{compute_coefficients, CoefficientSeries, NScaling, SolverSettings, SystemParams};
use crate::oracle::{compare, discretize_bath, exact_reduced_evolution, BathSpec, ComparisonReport, NetworkHamiltonian};
use crate::transform::{build_transform, CanonicalTransform};

/// A validated configuration with its derived objects.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub params: SystemParams,
    pub model: SpectralModel,
    pub potential: QuadraticPotential,
    pub temperature: Temperature,
    pub settings: SolverSettings,
    pub initial: GaussianState,
    pub transform: CanonicalTransform,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            params: config.system_params(),
            model: config.spectral.clone(),
            potential: config.potential()?,
            temperature: config.temperature,
            settings: config.solver.settings(),
            initial: config.initial_state()?,
            transform: build_transform(config.n_osc)?,
            config,
        })
    }

    pub fn with_n_scaling(mut self, scaling: NScaling) -> Self {
        self.settings.n_scaling = scaling;
        self.config.solver.n_scaling = scaling;
        self
    }

    pub fn step(&self) -> f64 {
        self.config.time.t_max / self.config.time.n_steps as f64
    }

    /// `η` and `ν` on the output grid.
    pub fn kernels(&self) -> Result<KernelTable> {
        tabulate_kernels(
            &self.model,
            self.temperature,
            self.params.hbar,
            self.config.time.t_max,
            self.config.time.n_steps,
            self.settings.quadrature,
        )
    }

    pub fn coefficients(&self) -> Result<CoefficientSeries> {
        self.coefficients_with(&self.model, self.settings.n_scaling, self.config.time.n_steps)
    }

    /// Coefficients for another bath model or scaling on the first
    /// `n_steps` steps of the scenario grid.
    pub fn coefficients_with(&self, model: &SpectralModel, scaling: NScaling, n_steps: usize) -> Result<CoefficientSeries> {
        let settings = SolverSettings {
            n_scaling: scaling,
            ..self.settings
        };
        compute_coefficients(
            model,
            self.temperature,
            &self.params,
            &settings,
            n_steps as f64 * self.step(),
            n_steps,
        )
    }

    pub fn evolve(&self, series: &CoefficientSeries) -> Result<Trajectory> {
        let options = EvolveOptions {
            substeps: self.config.solver.substeps,
            ..EvolveOptions::default()
        };
        match self.config.solver.evolution {
            EvolutionMethod::Factorized => {
                factorized_evolve(&self.initial, series, &self.potential, &self.transform, &options)
            }
            EvolutionMethod::Direct => evolve(&self.initial, series, &self.potential, &options),
        }
    }

    pub fn diagnostics(&self, traj: &Trajectory) -> Result<DiagnosticTable> {
        diagnostic_table(
            traj,
            &self.config.output.diagnostics,
            self.params.hbar,
            self.config.output.negativity_base,
        )
    }

    /// Coefficients, then evolution unless the horizon contains a caustic.
    pub fn run(&self) -> Result<RunOutcome> {
        let series = self.coefficients()?;
        let mut warnings = Vec::new();
        let (trajectory, diagnostics) = match series.first_caustic() {
            Some(t) => {
                warnings.push(format!(
                    "caustic at t = {t}: coefficients are undefined there; evolution skipped"
                ));
                (None, None)
            }
            None => {
                let traj = self.evolve(&series)?;
                warnings.extend(traj.warnings().iter().cloned());
                let diag = self.diagnostics(&traj)?;
                (Some(traj), Some(diag))
            }
        };
        Ok(RunOutcome {
            series,
            trajectory,
            diagnostics,
            warnings,
        })
    }

    pub fn oracle_bath(&self) -> Result<BathSpec> {
        discretize_bath(
            &self.model,
            self.config.oracle.n_modes,
            self.config.omega_max(),
            self.config.oracle.comb,
        )
    }

    /// Master equation against the exact network over the scenario grid,
    /// restricted to half the comb recurrence time.
    pub fn oracle_compare(&self) -> Result<OracleOutcome> {
        let bath = self.oracle_bath()?;
        let master_model = match self.config.oracle.kernels {
            KernelSource::Comb => bath.model(),
            KernelSource::Continuum => self.model.clone(),
        };
        let network = NetworkHamiltonian::build(&self.params, &self.potential, &bath)?;
        let n_steps = self.config.time.n_steps;
        let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * self.step()).collect();
        let oracle = exact_reduced_evolution(&network, &bath, &self.initial, self.temperature, self.params.hbar, &times)?;
        let window = bath.recurrence_time().map(|t| 0.5 * t);

        let mut trials = Vec::new();
        let selected = if self.config.oracle.select_scaling {
            let horizon = (self.config.oracle.selection_periods * 2.0 * PI / self.params.omega).min(self.config.time.t_max);
            let m = ((horizon / self.step()).round() as usize).clamp(2, n_steps);
            let short = Trajectory::new(times[..=m].to_vec(), oracle.states()[..=m].to_vec())?;
            for scaling in [NScaling::ComReduced, NScaling::AsPrinted] {
                let outcome = self
                    .coefficients_with(&master_model, scaling, m)
                    .and_then(|s| self.evolve(&s))
                    .and_then(|t| compare(&t, &short, &self.transform, window));
                trials.push(match outcome {
                    Ok(r) => ScalingTrial {
                        scaling,
                        deviation: Some(r.max_covariance),
                        error: None,
                    },
                    Err(e) => ScalingTrial {
                        scaling,
                        deviation: None,
                        error: Some(e.to_string()),
                    },
                });
            }
            let best = trials
                .iter()
                .filter_map(|t| t.deviation.filter(|d| d.is_finite()).map(|d| (t.scaling, d)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((s, _)) => s,
                None => return domain("neither n_scaling mode produced a trajectory over the selection horizon"),
            }
        } else {
            self.settings.n_scaling
        };

        let series = self.coefficients_with(&master_model, selected, n_steps)?;
        let master = self.evolve(&series)?;
        let report = compare(&master, &oracle, &self.transform, window)?;
        let passed = report.passes(self.config.oracle.tolerance, self.config.oracle.relative_tolerance);
        Ok(OracleOutcome {
            bath,
            trials,
            selected,
            series,
            master,
            oracle,
            report,
            passed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub series: CoefficientSeries,
    pub trajectory: Option<Trajectory>,
    pub diagnostics: Option<DiagnosticTable>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTrial {
    pub scaling: NScaling,
    pub deviation: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub bath: BathSpec,
    pub trials: Vec<ScalingTrial>,
    pub selected: NScaling,
    pub series: CoefficientSeries,
    pub master: Trajectory,
    pub oracle: Trajectory,
    pub report: ComparisonReport,
    pub passed: bool,
}
