//! Scenario files and the planning pipeline.
//!
//! Scenario files are TOML with fixed I/O units: km, km/s, hours and
//! seconds. Everything is converted to nondimensional units on load.

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::cr3bp::{nondimensionalize, ChiefTrajectory, Cr3bpSystem, SynodicState};
use crate::error::{Error, Result};
use crate::kd::{pseudostate, solve, ManeuverPlan, SolverConfig, SolverReport};
use crate::relative::RelativeState;
use crate::stm::{build_control_grid, ControlGrid, PlantEval, StmStrategy};

/// Scenarios shipped with the crate, by name.
pub const BUNDLED: [(&str, &str); 4] = [
    ("reconfig1", include_str!("../scenarios/reconfig1.toml")),
    ("reconfig2", include_str!("../scenarios/reconfig2.toml")),
    ("reconfig1-extended", include_str!("../scenarios/reconfig1-extended.toml")),
    ("mpc-nrho", include_str!("../scenarios/mpc-nrho.toml")),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSpec {
    pub mu: f64,
    pub du_km: f64,
    pub tu_s: f64,
}

/// Position and velocity pair as written in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub position_km: [f64; 3],
    pub velocity_kmps: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantEvalSpec {
    #[default]
    SegmentStart,
    Midpoint,
}

fn default_ni_tol() -> f64 {
    1e-12
}

/// STM strategy with I/O units (minutes for the exponential step).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrategySpec {
    MatrixExponential {
        step_minutes: f64,
        #[serde(default)]
        plant_eval: PlantEvalSpec,
    },
    NumericalIntegration {
        #[serde(default = "default_ni_tol")]
        tol: f64,
    },
    Hcw,
    YamanakaAnkersen,
}

impl StrategySpec {
    pub fn resolve(&self, sys: &Cr3bpSystem) -> Result<StmStrategy> {
        let s = match *self {
            Self::MatrixExponential { step_minutes, plant_eval } => StmStrategy::MatrixExponential {
                step: sys.seconds_to_tu(step_minutes * 60.0),
                eval: match plant_eval {
                    PlantEvalSpec::SegmentStart => PlantEval::SegmentStart,
                    PlantEvalSpec::Midpoint => PlantEval::Midpoint,
                },
            },
            Self::NumericalIntegration { tol } => StmStrategy::NumericalIntegration { tol },
            Self::Hcw => StmStrategy::Hcw,
            Self::YamanakaAnkersen => StmStrategy::YamanakaAnkersen,
        };
        s.validate()?;
        Ok(s)
    }

    /// Applies a command-line override. Parameters missing from the
    /// override are kept from `self` when the kind matches.
    pub fn overridden_by(&self, over: &StrategyOverride) -> Self {
        match (over, self) {
            (StrategyOverride::MatrixExponential(Some(m)), Self::MatrixExponential { plant_eval, .. }) => {
                Self::MatrixExponential { step_minutes: *m, plant_eval: *plant_eval }
            }
            (StrategyOverride::MatrixExponential(None), Self::MatrixExponential { .. }) => *self,
            (StrategyOverride::MatrixExponential(m), _) => Self::MatrixExponential {
                step_minutes: m.unwrap_or(10.0),
                plant_eval: PlantEvalSpec::SegmentStart,
            },
            (StrategyOverride::NumericalIntegration(Some(t)), _) => Self::NumericalIntegration { tol: *t },
            (StrategyOverride::NumericalIntegration(None), Self::NumericalIntegration { .. }) => *self,
            (StrategyOverride::NumericalIntegration(None), _) => {
                Self::NumericalIntegration { tol: default_ni_tol() }
            }
            (StrategyOverride::Hcw, _) => Self::Hcw,
            (StrategyOverride::YamanakaAnkersen, _) => Self::YamanakaAnkersen,
        }
    }
}

/// Strategy given on the command line, e.g. `matrix-exponential:10`
/// (minutes), `numerical-integration:1e-12`, `hcw`, `ya`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyOverride {
    MatrixExponential(Option<f64>),
    NumericalIntegration(Option<f64>),
    Hcw,
    YamanakaAnkersen,
}

impl FromStr for StrategyOverride {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, param) = match s.split_once(':') {
            Some((k, p)) => (k, Some(p)),
            None => (s, None),
        };
        let num = |p: Option<&str>| -> Result<Option<f64>> {
            p.map(|p| {
                p.parse::<f64>()
                    .map_err(|_| Error::Config(format!("strategy parameter `{p}` is not a number")))
            })
            .transpose()
        };
        let no_param = |v: Self| {
            if param.is_some() {
                Err(Error::Config(format!("strategy `{kind}` takes no parameter")))
            } else {
                Ok(v)
            }
        };
        match kind {
            "matrix-exponential" | "me" => Ok(Self::MatrixExponential(num(param)?)),
            "numerical-integration" | "ni" => Ok(Self::NumericalIntegration(num(param)?)),
            "hcw" => no_param(Self::Hcw),
            "yamanaka-ankersen" | "ya" => no_param(Self::YamanakaAnkersen),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

fn default_tol() -> f64 {
    1e-12
}

fn default_samples() -> usize {
    1001
}

/// Ground-truth integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpec {
    /// Tolerance of the ground-truth integrator.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Tolerance used for the planner's chief trajectory.
    #[serde(default = "default_tol")]
    pub chief_tol: f64,
    /// Uniform samples written to trajectory logs.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl Default for TruthSpec {
    fn default() -> Self {
        Self { tol: default_tol(), chief_tol: default_tol(), samples: default_samples() }
    }
}

/// Zero-mean Gaussian navigation and execution errors (standard deviations).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub chief_position_km: f64,
    pub chief_velocity_kmps: f64,
    pub deputy_position_km: f64,
    pub deputy_velocity_kmps: f64,
    pub maneuver_time_s: f64,
    pub maneuver_magnitude_kmps: f64,
    pub maneuver_direction_deg: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            chief_position_km: 1.0,
            chief_velocity_kmps: 0.01,
            deputy_position_km: 0.01,
            deputy_velocity_kmps: 0.001,
            maneuver_time_s: 60.0,
            maneuver_magnitude_kmps: 0.01,
            maneuver_direction_deg: 1.0,
        }
    }
}

impl NoiseModel {
    pub fn zero() -> Self {
        Self {
            chief_position_km: 0.0,
            chief_velocity_kmps: 0.0,
            deputy_position_km: 0.0,
            deputy_velocity_kmps: 0.0,
            maneuver_time_s: 0.0,
            maneuver_magnitude_kmps: 0.0,
            maneuver_direction_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("chief_position_km", self.chief_position_km),
            ("chief_velocity_kmps", self.chief_velocity_kmps),
            ("deputy_position_km", self.deputy_position_km),
            ("deputy_velocity_kmps", self.deputy_velocity_kmps),
            ("maneuver_time_s", self.maneuver_time_s),
            ("maneuver_magnitude_kmps", self.maneuver_magnitude_kmps),
            ("maneuver_direction_deg", self.maneuver_direction_deg),
        ];
        for (k, v) in all {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("noise.{k} must be a finite value >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    pub n_segments: usize,
    pub seed: u64,
    pub noise: NoiseModel,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self { n_segments: 10, seed: 0, noise: NoiseModel::default() }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_segments < 1 {
            return Err(Error::Config("mpc.n_segments must be >= 1".into()));
        }
        self.noise.validate()
    }
}

/// Monte Carlo sampling settings, in I/O units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub n_trials: usize,
    pub seed: u64,
    /// Exponential step used by the matrix-exponential strategy (s).
    pub me_step_s: f64,
    pub n_grid_steps: usize,
    /// Per-component magnitude range of the log-uniform positions (km).
    pub position_min_km: f64,
    pub position_max_km: f64,
    pub velocity_std_kmps: f64,
    /// Log-uniform window range (TU).
    pub window_min_tu: f64,
    pub window_max_tu: f64,
    pub strategies: Vec<String>,
    /// Halo catalog CSV; the bundled catalog when absent.
    pub catalog: Option<String>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_trials: 20,
            seed: 7,
            me_step_s: 60.0,
            n_grid_steps: 1000,
            position_min_km: 0.1,
            position_max_km: 5000.0,
            velocity_std_kmps: 0.001,
            window_min_tu: 0.1 * std::f64::consts::PI,
            window_max_tu: 4.0 * std::f64::consts::PI,
            strategies: ["matrix-exponential", "numerical-integration", "hcw", "yamanaka-ankersen"]
                .map(String::from)
                .to_vec(),
            catalog: None,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials < 1 {
            return Err(Error::Config("montecarlo.n_trials must be >= 1".into()));
        }
        if self.n_grid_steps < 1 {
            return Err(Error::Config("montecarlo.n_grid_steps must be >= 1".into()));
        }
        if !(self.me_step_s > 0.0) {
            return Err(Error::Config("montecarlo.me_step_s must be > 0".into()));
        }
        if !(self.position_min_km > 0.0 && self.position_max_km >= self.position_min_km) {
            return Err(Error::Config("montecarlo position range must satisfy 0 < min <= max".into()));
        }
        if !(self.velocity_std_kmps >= 0.0) {
            return Err(Error::Config("montecarlo.velocity_std_kmps must be >= 0".into()));
        }
        if !(self.window_min_tu > 0.0 && self.window_max_tu >= self.window_min_tu) {
            return Err(Error::Config("montecarlo window range must satisfy 0 < min <= max".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("montecarlo.strategies must not be empty".into()));
        }
        for s in &self.strategies {
            s.parse::<StrategyOverride>()?;
        }
        Ok(())
    }
}

/// On-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub window_hours: f64,
    pub n_grid_steps: usize,
    #[serde(default)]
    pub constants: Option<ConstantsSpec>,
    pub chief: StateSpec,
    pub deputy_initial: StateSpec,
    pub deputy_final: StateSpec,
    pub strategy: StrategySpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub truth: TruthSpec,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub montecarlo: McConfig,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let (_, text) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Config(format!("no bundled scenario `{name}`")))?;
        Self::parse(text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Resolves to internal units. `sys_override` replaces both the
    /// default constants and any `[constants]` section in the file.
    pub fn resolve(&self, sys_override: Option<Cr3bpSystem>) -> Result<Scenario> {
        let sys = match (sys_override, self.constants) {
            (Some(s), _) => s,
            (None, Some(c)) => Cr3bpSystem::new(c.mu, c.du_km, c.tu_s)?,
            (None, None) => Cr3bpSystem::earth_moon(),
        };
        if !(self.window_hours > 0.0 && self.window_hours.is_finite()) {
            return Err(Error::Config(format!("window_hours must be > 0, got {}", self.window_hours)));
        }
        if self.n_grid_steps < 1 {
            return Err(Error::Config("n_grid_steps must be >= 1".into()));
        }
        let t = &self.truth;
        if !(t.tol > 0.0 && t.chief_tol > 0.0) || t.samples < 2 {
            return Err(Error::Config("truth tolerances must be > 0 and samples >= 2".into()));
        }
        self.solver.validate()?;
        self.mpc.validate()?;
        self.montecarlo.validate()?;
        let v3 = |a: [f64; 3]| Vector3::new(a[0], a[1], a[2]);
        let chief0 = nondimensionalize(
            &SynodicState::new(v3(self.chief.position_km), v3(self.chief.velocity_kmps), 0.0),
            &sys,
        );
        let rel = |s: &StateSpec, t: f64| {
            let x = RelativeState::new(v3(s.position_km), v3(s.velocity_kmps), 0.0).nondimensional(&sys);
            RelativeState { t, ..x }
        };
        let window = sys.hours_to_tu(self.window_hours);
        Ok(Scenario {
            name: self.name.clone(),
            sys,
            chief0,
            deputy0: rel(&self.deputy_initial, 0.0),
            deputy_f: rel(&self.deputy_final, window),
            window,
            n_grid_steps: self.n_grid_steps,
            strategy: self.strategy.resolve(&sys)?,
            solver: self.solver,
            truth: self.truth,
            mpc: self.mpc,
            montecarlo: self.montecarlo.clone(),
        })
    }
}

/// A scenario in nondimensional units, starting at t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub sys: Cr3bpSystem,
    pub chief0: SynodicState,
    pub deputy0: RelativeState,
    pub deputy_f: RelativeState,
    /// Control window length (TU).
    pub window: f64,
    pub n_grid_steps: usize,
    pub strategy: StmStrategy,
    pub solver: SolverConfig,
    pub truth: TruthSpec,
    pub mpc: MpcConfig,
    pub montecarlo: McConfig,
}

impl Scenario {
    pub fn bundled(name: &str) -> Result<Self> {
        ScenarioFile::bundled(name)?.resolve(None)
    }

    pub fn t0(&self) -> f64 {
        self.chief0.t
    }

    pub fn tf(&self) -> f64 {
        self.chief0.t + self.window
    }

    pub fn with_strategy(&self, strategy: StmStrategy) -> Self {
        Self { strategy, ..self.clone() }
    }
}

/// Result of one planning pass.
#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub plan: ManeuverPlan,
    pub report: SolverReport,
    pub grid: ControlGrid,
}

/// Grid build, pseudostate and solve for a deputy transfer from
/// `deputy0` (at `chief0.t`) to `deputy_f` at `tf`.
#[allow(clippy::too_many_arguments)]
pub fn plan_transfer(
    sys: &Cr3bpSystem,
    chief0: &SynodicState,
    deputy0: &RelativeState,
    deputy_f: &RelativeState,
    tf: f64,
    n_grid_steps: usize,
    strategy: &StmStrategy,
    solver: &SolverConfig,
    chief_tol: f64,
) -> Result<PlanOutput> {
    if !(tf > chief0.t) {
        return Err(Error::InvalidInput(format!("planning window is empty ({} >= {tf})", chief0.t)));
    }
    let traj = ChiefTrajectory::propagate(chief0, tf, chief_tol, sys)?;
    let grid = build_control_grid(&traj, strategy, n_grid_steps)?;
    let omega = pseudostate(deputy0, deputy_f, &grid);
    let started = Instant::now();
    let (plan, mut report) = solve(&omega, deputy0, deputy_f, &grid, solver)?;
    report.solver_runtime = started.elapsed();
    Ok(PlanOutput { plan, report, grid })
}

/// Plans the scenario with its configured strategy.
pub fn plan(scenario: &Scenario) -> Result<PlanOutput> {
    plan_transfer(
        &scenario.sys,
        &scenario.chief0,
        &scenario.deputy0,
        &scenario.deputy_f,
        scenario.tf(),
        scenario.n_grid_steps,
        &scenario.strategy,
        &scenario.solver,
        scenario.truth.chief_tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse() {
        for (name, _) in BUNDLED {
            let s = Scenario::bundled(name).unwrap();
            assert_eq!(s.name, name);
            assert!(s.window > 0.0);
            assert_eq!(s.deputy0.t, 0.0);
            assert_eq!(s.deputy_f.t, s.window);
        }
    }

    #[test]
    fn reconfig1_encodes_tables() {
        let f = ScenarioFile::bundled("reconfig1").unwrap();
        assert_eq!(f.chief.position_km, [-13395.0, 0.0, -70841.0]);
        assert_eq!(f.chief.velocity_kmps, [0.0, 0.1055, 0.0]);
        assert_eq!(f.deputy_initial.position_km, [-300.0, -400.0, -200.0]);
        assert_eq!(f.deputy_final.position_km, [300.0, 400.0, 200.0]);
        assert_eq!(f.window_hours, 66.84);
        assert_eq!(f.n_grid_steps, 1000);
        assert_eq!(f.strategy, StrategySpec::MatrixExponential { step_minutes: 10.0, plant_eval: PlantEvalSpec::SegmentStart });
    }

    #[test]
    fn unknown_key_is_named() {
        let mut text = BUNDLED[0].1.to_string();
        text.push_str("\nbogus_key = 3\n");
        let err = ScenarioFile::parse(&text).unwrap_err().to_string();
        assert!(err.contains("bogus_key"), "{err}");
        let text = BUNDLED[0].1.replace("n_grid_steps", "n_grid_stepz");
        let err = ScenarioFile::parse(&text).unwrap_err().to_string();
        assert!(err.contains("n_grid_stepz"), "{err}");
    }

    #[test]
    fn nested_unknown_key_rejected() {
        let text = BUNDLED[0].1.replace("step_minutes", "step_minutez");
        assert!(ScenarioFile::parse(&text).is_err());
    }

    #[test]
    fn toml_roundtrip() {
        for (name, _) in BUNDLED {
            let f = ScenarioFile::bundled(name).unwrap();
            let back = ScenarioFile::parse(&f.to_toml().unwrap()).unwrap();
            assert_eq!(f, back);
        }
    }

    #[test]
    fn strategy_override_keeps_other_fields() {
        let f = ScenarioFile::bundled("reconfig1").unwrap();
        let over: StrategyOverride = "numerical-integration".parse().unwrap();
        let g = ScenarioFile { strategy: f.strategy.overridden_by(&over), ..f.clone() };
        assert_eq!(g.strategy, StrategySpec::NumericalIntegration { tol: 1e-12 });
        assert_eq!(g.chief, f.chief);
        assert_eq!(g.solver, f.solver);
        let me: StrategyOverride = "me:20".parse().unwrap();
        assert_eq!(
            f.strategy.overridden_by(&me),
            StrategySpec::MatrixExponential { step_minutes: 20.0, plant_eval: PlantEvalSpec::SegmentStart }
        );
        assert!("hcw:3".parse::<StrategyOverride>().is_err());
        assert!("warp".parse::<StrategyOverride>().is_err());
    }

    #[test]
    fn constants_override_precedence() {
        let mut f = ScenarioFile::bundled("reconfig2").unwrap();
        f.constants = Some(ConstantsSpec { mu: 0.0121, du_km: 384400.0, tu_s: 375190.0 });
        assert_eq!(f.resolve(None).unwrap().sys.mu, 0.0121);
        let cli = Cr3bpSystem::new(0.012, 384000.0, 375000.0).unwrap();
        assert_eq!(f.resolve(Some(cli)).unwrap().sys, cli);
    }

    #[test]
    fn invalid_values_rejected() {
        let mut f = ScenarioFile::bundled("reconfig2").unwrap();
        f.window_hours = 0.0;
        assert!(f.resolve(None).is_err());
        let mut f = ScenarioFile::bundled("reconfig2").unwrap();
        f.mpc.n_segments = 0;
        assert!(f.resolve(None).is_err());
        let mut f = ScenarioFile::bundled("reconfig2").unwrap();
        f.mpc.noise.maneuver_time_s = -1.0;
        assert!(f.resolve(None).is_err());
    }

    #[test]
    fn identical_states_over_tiny_window_need_no_control() {
        let mut s = Scenario::bundled("reconfig2").unwrap();
        s.window = 1e-9;
        s.n_grid_steps = 4;
        s.deputy0 = RelativeState::zero(0.0);
        s.deputy_f = RelativeState::zero(s.window);
        let out = plan(&s).unwrap();
        assert!(out.plan.impulses.is_empty());
        assert_eq!(out.plan.cost, 0.0);
    }
}
