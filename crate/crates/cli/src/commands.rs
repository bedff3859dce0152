use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use cislune::catalog::{load_halo_catalog, HaloCatalog};
use cislune::cr3bp::Cr3bpSystem;
use cislune::kd::ManeuverPlan;
use cislune::montecarlo::monte_carlo;
use cislune::mpc::{mpc_run, write_executed_csv};
use cislune::scenario::{plan, ConstantsSpec, Scenario, ScenarioFile, StrategyOverride, BUNDLED};
use cislune::sim::{rms_propagation_error, simulate, write_error_csv, RunMetrics};
use cislune::stm::uniform_times;
use cislune::Error;

use crate::{Cli, Command, CONSTANTS_ENV, EXIT_INPUT, EXIT_INTERNAL, EXIT_IO, EXIT_SIMULATION, EXIT_SOLVER, EXIT_USAGE};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "{m}"),
            Self::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Core(e) => match e {
                Error::Config(_) | Error::Catalog { .. } | Error::InvalidInput(_) => EXIT_INPUT,
                Error::Socp(_) | Error::RefineNonConvergence(_) | Error::InfeasibleTarget(_) => EXIT_SOLVER,
                Error::Singularity { .. }
                | Error::DegenerateFrame(_)
                | Error::StepUnderflow { .. }
                | Error::TooManySteps(_)
                | Error::ExpmOverflow(_)
                | Error::Shooting(_) => EXIT_SIMULATION,
                Error::Io(_) | Error::Csv(_) => EXIT_IO,
                #[allow(unreachable_patterns)]
                _ => EXIT_INTERNAL,
            },
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Run record written next to every set of outputs.
#[derive(Debug, Serialize)]
struct Manifest {
    command: String,
    version: String,
    scenario: String,
    /// SHA-256 of the effective `scenario.toml` written alongside.
    config_sha256: String,
    strategy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trials: Option<usize>,
    constants_source: String,
    files: Vec<String>,
    constants: ConstantsSpec,
}

fn read_scenario(arg: &str) -> Result<ScenarioFile> {
    let path = Path::new(arg);
    if path.is_file() {
        return Ok(ScenarioFile::load(path)?);
    }
    if BUNDLED.iter().any(|(n, _)| *n == arg) {
        return Ok(ScenarioFile::bundled(arg)?);
    }
    let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
    Err(Error::Config(format!("`{arg}` is neither a scenario file nor a bundled scenario ({})", names.join(", "))).into())
}

/// Fixes the constants used by the run: `--constants`, then the file's own
/// section, then the environment default, then the bundled Earth–Moon values.
fn pin_constants(file: &mut ScenarioFile, flag: Option<&Path>) -> Result<String> {
    let env = std::env::var_os(CONSTANTS_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let (sys, source) = match (flag, &file.constants, env) {
        (Some(p), _, _) => (Cr3bpSystem::from_constants_file(p)?, p.display().to_string()),
        (None, Some(c), _) => (Cr3bpSystem::new(c.mu, c.du_km, c.tu_s)?, "scenario".to_string()),
        (None, None, Some(p)) => (Cr3bpSystem::from_constants_file(&p)?, p.display().to_string()),
        (None, None, None) => (Cr3bpSystem::earth_moon(), "bundled".to_string()),
    };
    file.constants = Some(ConstantsSpec { mu: sys.mu, du_km: sys.du, tu_s: sys.tu });
    Ok(source)
}

struct Run {
    out: PathBuf,
    file: ScenarioFile,
    scenario: Scenario,
    constants_source: String,
    files: Vec<String>,
}

impl Run {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn finish(mut self, command: &str, seed: Option<u64>, trials: Option<usize>) -> Result<()> {
        let text = self.file.to_toml()?;
        let mut w = self.create("scenario.toml")?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        let hash = Sha256::digest(text.as_bytes());
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: self.file.name.clone(),
            config_sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
            strategy: self.scenario.strategy.to_string(),
            seed,
            trials,
            constants_source: self.constants_source.clone(),
            files: self.files.clone(),
            constants: self.file.constants.expect("constants pinned before resolving"),
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(self.out.join("manifest.toml"), text)?;
        Ok(())
    }
}

fn prepare(cli: &Cli, mut file: ScenarioFile) -> Result<Run> {
    if let Some(s) = &cli.strategy {
        let over: StrategyOverride = s.parse()?;
        file.strategy = file.strategy.overridden_by(&over);
    }
    let constants_source = pin_constants(&mut file, cli.constants.as_deref())?;
    let scenario = file.resolve(None)?;
    std::fs::create_dir_all(&cli.out)?;
    Ok(Run { out: cli.out.clone(), file, scenario, constants_source, files: Vec::new() })
}

fn write_metrics<W: Write>(w: W, m: &RunMetrics) -> Result<()> {
    let header = "cost_mps,final_rms_error_km,final_position_error_km,final_error_pct,stm_runtime_s,solver_runtime_s";
    let mut w = w;
    writeln!(w, "{header}")?;
    let vals = [m.cost_mps, m.final_rms_error_km, m.final_position_error_km, m.final_error_pct, m.stm_runtime_s, m.solver_runtime_s];
    let row: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
    writeln!(w, "{}", row.join(","))?;
    w.flush()?;
    Ok(())
}

fn print_metrics(m: &RunMetrics) {
    println!("cost: {:.6e} m/s", m.cost_mps);
    println!("final RMS error: {:.6e} km", m.final_rms_error_km);
    println!("final position error: {:.6e} km ({:.4e} %)", m.final_position_error_km, m.final_error_pct);
}

fn write_trajectory(run: &mut Run, log: &cislune::sim::TrajectoryLog, prefix: &str) -> Result<()> {
    let sys = run.scenario.sys;
    let w = run.create(&format!("{prefix}chief.csv"))?;
    log.write_chief_csv(w, &sys)?;
    let w = run.create(&format!("{prefix}deputy.csv"))?;
    log.write_deputy_csv(w, &sys)?;
    Ok(())
}

fn cmd_plan(cli: &Cli, scenario: &str) -> Result<()> {
    let mut run = prepare(cli, read_scenario(scenario)?)?;
    let sc = run.scenario.clone();
    let out = plan(&sc)?;
    let sim = simulate(&out.plan, &sc)?;
    let metrics = sim.metrics.with_runtimes(&out.report);
    out.plan.write_csv(run.create("plan.csv")?, &sc.sys)?;
    let mut w = run.create("report.txt")?;
    w.write_all(out.report.to_text(&sc.sys).as_bytes())?;
    w.flush()?;
    write_trajectory(&mut run, &sim.log, "")?;
    write_metrics(run.create("metrics.csv")?, &metrics)?;
    println!("scenario: {} ({})", sc.name, sc.strategy);
    println!("impulses: {}", out.plan.impulses.len());
    print_metrics(&metrics);
    run.finish("plan", None, None)
}

fn cmd_simulate(cli: &Cli, scenario: &str, plan_path: Option<&Path>) -> Result<()> {
    let mut run = prepare(cli, read_scenario(scenario)?)?;
    let sc = run.scenario.clone();
    let (maneuvers, report) = match plan_path {
        Some(p) => {
            let mut m = ManeuverPlan::read_csv(File::open(p)?, &sc.sys)?;
            // hour round-trips can land an endpoint burn one ulp outside
            let (t0, tf) = (sc.t0(), sc.tf());
            for imp in &mut m.impulses {
                let slack = 1e-12 * tf.abs().max(1.0);
                if imp.t < t0 && imp.t > t0 - slack {
                    imp.t = t0;
                }
                if imp.t > tf && imp.t < tf + slack {
                    imp.t = tf;
                }
            }
            (m, None)
        }
        None => {
            let out = plan(&sc)?;
            out.plan.write_csv(run.create("plan.csv")?, &sc.sys)?;
            (out.plan, Some(out.report))
        }
    };
    let sim = simulate(&maneuvers, &sc)?;
    let metrics = match &report {
        Some(r) => sim.metrics.with_runtimes(r),
        None => sim.metrics,
    };
    write_trajectory(&mut run, &sim.log, "")?;
    write_metrics(run.create("metrics.csv")?, &metrics)?;
    print_metrics(&metrics);
    run.finish("simulate", None, None)
}

fn cmd_errors(cli: &Cli, scenario: &str, series: Option<&[String]>) -> Result<()> {
    let mut run = prepare(cli, read_scenario(scenario)?)?;
    let sc = run.scenario.clone();
    let names: Vec<String> = match (series, &cli.strategy) {
        (Some(s), _) => s.to_vec(),
        (None, Some(s)) => vec![s.clone()],
        (None, None) => vec!["matrix-exponential".into(), "numerical-integration".into()],
    };
    let times = uniform_times(sc.t0(), sc.tf(), sc.truth.samples - 1);
    let mut out = Vec::new();
    for name in &names {
        let over: StrategyOverride = name.parse()?;
        let strategy = run.file.strategy.overridden_by(&over).resolve(&sc.sys)?;
        let errors = rms_propagation_error(&strategy, &sc, &times)?;
        println!("{strategy}: final RMS position error {:.6e} km", errors.last().copied().unwrap_or(0.0));
        out.push((strategy.tag().to_string(), errors));
    }
    let hours: Vec<f64> = times.iter().map(|&t| sc.sys.tu_to_hours(t)).collect();
    write_error_csv(run.create("errors.csv")?, &hours, &out)?;
    run.finish("errors", None, None)
}

fn cmd_montecarlo(cli: &Cli, scenario: Option<&str>, timing: bool) -> Result<()> {
    let (Some(seed), Some(trials)) = (cli.seed, cli.trials) else {
        return Err(CliError::Usage("montecarlo needs both --seed and --trials".into()));
    };
    let mut file = read_scenario(scenario.unwrap_or("reconfig1"))?;
    file.montecarlo.seed = seed;
    file.montecarlo.n_trials = trials;
    if let Some(s) = &cli.strategy {
        s.parse::<StrategyOverride>()?;
        file.montecarlo.strategies = vec![s.clone()];
    }
    let mut run = prepare(cli, file)?;
    let sc = run.scenario.clone();
    let catalog = match &sc.montecarlo.catalog {
        Some(p) => load_halo_catalog(p, &sc.sys)?,
        None => HaloCatalog::bundled(&sc.sys)?,
    };
    let campaign = monte_carlo(&sc.montecarlo, &sc.solver, &sc.truth, &sc.sys, &catalog, cli.workers)?;
    campaign.write_trials_csv(run.create("trials.csv")?, &sc.sys)?;
    campaign.write_summary_csv(run.create("summary.csv")?)?;
    if timing {
        campaign.write_runtime_csv(run.create("runtime.csv")?)?;
    }
    for s in &campaign.strategies {
        let median = campaign.stats(s, |m| m.final_error_pct).map_or(f64::NAN, |st| st.median);
        println!(
            "{s}: median final position error {median:.4e} %, {} of {} trials failed",
            campaign.failures(s),
            campaign.trials.len()
        );
    }
    run.finish("montecarlo", Some(seed), Some(trials))
}

fn cmd_mpc(cli: &Cli, scenario: &str, segments: Option<usize>) -> Result<()> {
    let mut file = read_scenario(scenario)?;
    if let Some(seed) = cli.seed {
        file.mpc.seed = seed;
    }
    if let Some(n) = segments {
        file.mpc.n_segments = n;
    }
    let mut run = prepare(cli, file)?;
    let sc = run.scenario.clone();
    let out = mpc_run(&sc, &sc.mpc)?;
    out.write_summary_csv(run.create("summary.csv")?)?;
    write_executed_csv(run.create("mpc_executed.csv")?, &out.mpc, &sc.sys)?;
    write_executed_csv(run.create("open_loop_executed.csv")?, &out.open_loop, &sc.sys)?;
    write_trajectory(&mut run, &out.mpc.log, "mpc_")?;
    write_trajectory(&mut run, &out.open_loop.log, "open_loop_")?;
    for (label, r) in [("mpc", &out.mpc), ("open loop", &out.open_loop)] {
        println!(
            "{label}: terminal position error {:.6e} km, cost {:.6e} m/s",
            r.metrics.final_position_error_km, r.executed_cost_mps
        );
    }
    run.finish("mpc", Some(sc.mpc.seed), None)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Plan { scenario } => cmd_plan(cli, scenario),
        Command::Simulate { scenario, plan } => cmd_simulate(cli, scenario, plan.as_deref()),
        Command::Errors { scenario, series } => cmd_errors(cli, scenario, series.as_deref()),
        Command::Montecarlo { scenario, timing } => cmd_montecarlo(cli, scenario.as_deref(), *timing),
        Command::Mpc { scenario, segments } => cmd_mpc(cli, scenario, *segments),
    }
}
