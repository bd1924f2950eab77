//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, OutputFormat, ScenarioConfig};
use crate::diagnostics::parse_diagnostics;
use crate::error::{Error, Result};
use crate::hpz::NScaling;
use crate::output::{
    coefficient_table, comparison_table, kernel_table, svg_line_chart, trajectory_table, transform_table, Manifest, Table,
};
use crate::pipeline::Scenario;
use crate::transform::{build_transform, verify_canonical};

/// Exit status when an oracle comparison misses its tolerances.
pub const EXIT_TOLERANCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "qbm", version, about = "Coupled oscillators in a common harmonic bath")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// csv writes files; table prints to standard output.
    #[arg(long, global = true)]
    pub format: Option<OutputFormat>,
    /// Comma-separated diagnostics: uncertainty, purity, negativity, physicality.
    #[arg(long, global = true)]
    pub diag: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Collective-equation normalisation: com_reduced (default) or as_printed
    #[arg(long = "n-scaling", global = true)]
    pub n_scaling: Option<NScaling>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Canonical transformation matrices and their checks.
    Transform {
        /// Number of oscillators when no config is given.
        #[arg(long)]
        n_osc: Option<usize>,
    },
    /// Dissipation and noise kernels on the time grid.
    Kernels,
    /// Master-equation coefficients a, b, c, d.
    Coeffs,
    /// Gaussian-state trajectory.
    Evolve,
    /// Master equation against the exact system-plus-bath evolution.
    OracleCompare,
    /// Kernels, coefficients, trajectory and diagnostics.
    Run {
        /// Also run the oracle comparison.
        #[arg(long)]
        oracle: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Transform { .. } => "transform",
            Command::Kernels => "kernels",
            Command::Coeffs => "coeffs",
            Command::Evolve => "evolve",
            Command::OracleCompare => "oracle-compare",
            Command::Run { .. } => "run",
        }
    }
}

/// Parses arguments, runs, and maps errors to exit codes.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } => 2,
                _ => 1,
            }
        }
    }
}

fn load_config(common: &CommonArgs) -> Result<ScenarioConfig> {
    let path = common.config.as_ref().ok_or_else(|| Error::Config {
        path: "--config".into(),
        message: "a scenario file is required".into(),
    })?;
    let text = fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = common.n_scaling {
        cfg.solver.n_scaling = s;
        cfg.oracle.select_scaling = false;
    }
    if let Some(list) = &common.diag {
        cfg.output.diagnostics = parse_diagnostics(list)?;
    }
    if let Some(f) = common.format {
        cfg.output.format = f;
    }
    if let Some(dir) = &common.out {
        cfg.output.dir = dir.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<i32> {
    if let Some(n) = cli.common.threads {
        // a second initialisation in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    if let Command::Transform { n_osc } = &cli.command {
        return transform_command(&cli.common, *n_osc);
    }
    let cfg = load_config(&cli.common)?;
    let runs = cfg.expand()?;
    let base = PathBuf::from(&cfg.output.dir);
    let single = runs.len() == 1;
    let mut code = 0;
    for (i, (label, run_cfg)) in runs.into_iter().enumerate() {
        let dir = if single {
            base.clone()
        } else {
            base.join(format!("run{:03}", i + 1))
        };
        if !single {
            eprintln!("sweep point {}: {label}", i + 1);
        }
        code = code.max(run_one(&cli.command, run_cfg, &dir)?);
    }
    Ok(code)
}

struct Emitter {
    dir: PathBuf,
    format: OutputFormat,
    plot: bool,
    manifest: Manifest,
}

impl Emitter {
    fn new(command: &Command, cfg: &ScenarioConfig, dir: &Path) -> Result<Self> {
        if cfg.output.format == OutputFormat::Csv {
            fs::create_dir_all(dir)?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            format: cfg.output.format,
            plot: cfg.output.plot,
            manifest: Manifest::new(command.name(), cfg),
        })
    }

    fn table(&mut self, name: &str, table: &Table) -> Result<()> {
        match self.format {
            OutputFormat::Csv => {
                let file = format!("{name}.csv");
                table.write_csv(&self.dir.join(&file))?;
                self.manifest.files.push(file);
            }
            OutputFormat::Table => {
                println!("# {name}");
                print!("{}", table.to_text());
            }
        }
        Ok(())
    }

    fn plot(&mut self, name: &str, title: &str, table: &Table, columns: &[&str]) -> Result<()> {
        if !self.plot || self.format != OutputFormat::Csv {
            return Ok(());
        }
        let x = table.column(&table.headers[0]).unwrap_or_default();
        let ys: Vec<(String, Vec<f64>)> = columns
            .iter()
            .filter_map(|c| table.column(c).map(|v| (c.to_string(), v)))
            .collect();
        let refs: Vec<(&str, &[f64])> = ys.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
        let file = format!("{name}.svg");
        fs::write(self.dir.join(&file), svg_line_chart(title, &table.headers[0], &x, &refs))?;
        self.manifest.files.push(file);
        Ok(())
    }

    fn warn(&mut self, msg: String) {
        eprintln!("warning: {msg}");
        self.manifest.warnings.push(msg);
    }

    fn finish(self) -> Result<()> {
        if self.format == OutputFormat::Csv {
            self.manifest.write(&self.dir)?;
        }
        Ok(())
    }
}

fn run_one(command: &Command, cfg: ScenarioConfig, dir: &Path) -> Result<i32> {
    let mut out = Emitter::new(command, &cfg, dir)?;
    let scenario = Scenario::new(cfg)?;
    let mut code = 0;
    match command {
        Command::Transform { .. } => unreachable!("handled before config expansion"),
        Command::Kernels => {
            let t = kernel_table(&scenario.kernels()?);
            out.table("kernels", &t)?;
            out.plot("kernels", "Dissipation and noise kernels", &t, &["eta", "nu"])?;
        }
        Command::Coeffs => {
            let series = scenario.coefficients()?;
            let t = coefficient_table(&series);
            out.table("coefficients", &t)?;
            out.plot("coefficients", "Master-equation coefficients", &t, &["a", "b", "c", "d"])?;
            if let Some(tc) = series.first_caustic() {
                out.warn(format!("caustic at t = {tc}; affected rows are flagged"));
            }
        }
        Command::Evolve | Command::Run { .. } => {
            if let Command::Run { .. } = command {
                out.table("kernels", &kernel_table(&scenario.kernels()?))?;
            }
            let result = scenario.run()?;
            let coeffs = coefficient_table(&result.series);
            out.table("coefficients", &coeffs)?;
            out.plot("coefficients", "Master-equation coefficients", &coeffs, &["a", "b", "c", "d"])?;
            for w in result.warnings {
                out.warn(w);
            }
            if let Some(traj) = &result.trajectory {
                let t = trajectory_table(traj, result.diagnostics.as_ref());
                out.table("trajectory", &t)?;
                let mut cols = vec!["cov_x1_x1", "cov_p1_p1"];
                if let Some(d) = &result.diagnostics {
                    cols.extend(d.headers.iter().map(String::as_str));
                }
                out.plot("trajectory", "Trajectory", &t, &cols)?;
            }
            if let Command::Run { oracle: true } = command {
                code = oracle_section(&scenario, &mut out)?;
            }
        }
        Command::OracleCompare => {
            code = oracle_section(&scenario, &mut out)?;
        }
    }
    out.finish()?;
    Ok(code)
}

fn oracle_section(scenario: &Scenario, out: &mut Emitter) -> Result<i32> {
    let o = scenario.oracle_compare()?;
    let t = comparison_table(&o.report);
    out.table("comparison", &t)?;
    out.plot(
        "comparison",
        "Relative deviation from the exact evolution",
        &t,
        &["covariance_dev", "collective_dev", "relative_dev"],
    )?;
    out.table("oracle_trajectory", &trajectory_table(&o.oracle, None))?;
    for trial in &o.trials {
        match (&trial.deviation, &trial.error) {
            (Some(d), _) => eprintln!("n_scaling {}: selection deviation {d:.3e}", trial.scaling),
            (None, Some(e)) => eprintln!("n_scaling {}: failed during selection ({e})", trial.scaling),
            _ => {}
        }
    }
    out.manifest.n_scaling = o.selected.to_string();
    let cfg = &scenario.config.oracle;
    out.manifest.summary = serde_json::json!({
        "selected_n_scaling": o.selected.to_string(),
        "max_covariance_deviation": o.report.max_covariance,
        "max_collective_deviation": o.report.max_collective,
        "max_relative_deviation": o.report.max_relative,
        "worst_time": o.report.worst_time,
        "window_end": if o.report.window_end.is_finite() { Some(o.report.window_end) } else { None },
        "tolerance": cfg.tolerance,
        "relative_tolerance": cfg.relative_tolerance,
        "passed": o.passed,
    });
    println!(
        "oracle-compare: {} (n_scaling {}, covariance {:.3e} <= {:.1e}, relative sector {:.3e} <= {:.1e})",
        if o.passed { "PASS" } else { "FAIL" },
        o.selected,
        o.report.max_covariance,
        cfg.tolerance,
        o.report.max_relative,
        cfg.relative_tolerance
    );
    Ok(if o.passed { 0 } else { EXIT_TOLERANCE })
}

fn transform_command(common: &CommonArgs, n_osc: Option<usize>) -> Result<i32> {
    let cfg = match (n_osc, &common.config) {
        (Some(0), None) => {
            return Err(Error::Config {
                path: "--n-osc".into(),
                message: "must be >= 1".into(),
            })
        }
        (Some(n), None) => {
            let mut c = ScenarioConfig::with_n_osc(n);
            if let Some(f) = common.format {
                c.output.format = f;
            }
            if let Some(dir) = &common.out {
                c.output.dir = dir.to_string_lossy().into_owned();
            }
            c
        }
        (None, Some(_)) => load_config(common)?,
        _ => {
            return Err(Error::Config {
                path: "--n-osc".into(),
                message: "give exactly one of --n-osc or --config".into(),
            })
        }
    };
    let command = Command::Transform { n_osc };
    let mut out = Emitter::new(&command, &cfg, Path::new(&cfg.output.dir))?;
    let t = build_transform(cfg.n_osc)?;
    out.table("transform", &transform_table(&t))?;
    let report = verify_canonical(&t, 100, 0x5eed);
    out.manifest.summary = serde_json::json!({ "max_deviation": report.max_deviation() });
    println!("transform: N = {}, max structural deviation {:.3e}", cfg.n_osc, report.max_deviation());
    out.finish()?;
    Ok(0)
}
