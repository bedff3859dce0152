//! Python bindings for the `cislune` planner.
//!
//! Quantities cross the boundary in I/O units: km, km/s, m/s for impulses
//! and hours for time.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cislune::catalog::{load_halo_catalog, HaloCatalog};
use cislune::cr3bp::{dimensionalize, Cr3bpSystem};
use cislune::kd::ManeuverPlan;
use cislune::montecarlo::monte_carlo as run_campaign;
use cislune::mpc::mpc_run;
use cislune::scenario::{plan as plan_scenario, Scenario, ScenarioFile, StrategyOverride};
use cislune::sim::{rms_propagation_error, simulate as simulate_plan, RunMetrics};
use cislune::stm::uniform_times;
use cislune::Error;

create_exception!(cislune, CisluneError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::Catalog { .. } => PyValueError::new_err(e.to_string()),
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => CisluneError::new_err(e.to_string()),
    }
}

/// A resolved scenario: chief, deputy boundary states, window and settings.
#[pyclass(name = "Scenario", module = "cislune", frozen)]
#[derive(Clone)]
pub struct PyScenario {
    file: ScenarioFile,
    inner: Scenario,
}

impl PyScenario {
    fn from_file(file: ScenarioFile) -> PyResult<Self> {
        let inner = file.resolve(None).map_err(to_py)?;
        Ok(Self { file, inner })
    }
}

#[pymethods]
impl PyScenario {
    /// One of the scenarios shipped with the library.
    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        Self::from_file(ScenarioFile::bundled(name).map_err(to_py)?)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Self::from_file(ScenarioFile::parse(text).map_err(to_py)?)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Self::from_file(ScenarioFile::load(path).map_err(to_py)?)
    }

    /// Copy with the STM strategy replaced, e.g. `"ni:1e-12"`, `"me:10"`, `"hcw"`.
    fn with_strategy(&self, spec: &str) -> PyResult<Self> {
        let over: StrategyOverride = spec.parse().map_err(to_py)?;
        let mut file = self.file.clone();
        file.strategy = file.strategy.overridden_by(&over);
        Self::from_file(file)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.file.to_toml().map_err(to_py)
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn window_hours(&self) -> f64 {
        self.inner.sys.tu_to_hours(self.inner.window)
    }

    #[getter]
    fn n_grid_steps(&self) -> usize {
        self.inner.n_grid_steps
    }

    #[getter]
    fn strategy(&self) -> String {
        self.inner.strategy.to_string()
    }

    /// `(mu, du_km, tu_s)`.
    #[getter]
    fn constants(&self) -> (f64, f64, f64) {
        let s = self.inner.sys;
        (s.mu, s.du, s.tu)
    }

    fn __repr__(&self) -> String {
        format!("Scenario({:?}, window_hours={}, strategy={})", self.inner.name, self.window_hours(), self.strategy())
    }
}

/// Impulse sequence in LVLH, with a summary of the solve that produced it.
#[pyclass(name = "Plan", module = "cislune", frozen)]
pub struct PyPlan {
    plan: ManeuverPlan,
    sys: Cr3bpSystem,
    report: Option<String>,
    duality_gap: Option<f64>,
    refine_iterations: Option<usize>,
}

#[pymethods]
impl PyPlan {
    /// Reads a plan CSV (`t_hours,dv_x_mps,dv_y_mps,dv_z_mps`).
    #[staticmethod]
    fn from_csv(text: &str, scenario: &PyScenario) -> PyResult<Self> {
        let sys = scenario.inner.sys;
        let plan = ManeuverPlan::read_csv(text.as_bytes(), &sys).map_err(to_py)?;
        Ok(Self { plan, sys, report: None, duality_gap: None, refine_iterations: None })
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.plan.write_csv(&mut buf, &self.sys).map_err(to_py)?;
        Ok(String::from_utf8(buf).expect("csv writer emits utf-8"))
    }

    /// `[(t_hours, (dvx, dvy, dvz) m/s), ...]`.
    #[getter]
    fn impulses(&self) -> Vec<(f64, [f64; 3])> {
        let k = self.sys.vu() * 1000.0;
        self.plan
            .impulses
            .iter()
            .map(|i| (self.sys.tu_to_hours(i.t), [i.dv.x * k, i.dv.y * k, i.dv.z * k]))
            .collect()
    }

    #[getter]
    fn cost_mps(&self) -> f64 {
        self.plan.cost_mps(&self.sys)
    }

    /// Terminal-constraint residual of the linear model (nondimensional).
    #[getter]
    fn residual(&self) -> f64 {
        self.plan.residual
    }

    #[getter]
    fn duality_gap(&self) -> Option<f64> {
        self.duality_gap
    }

    #[getter]
    fn refine_iterations(&self) -> Option<usize> {
        self.refine_iterations
    }

    #[getter]
    fn report(&self) -> Option<&str> {
        self.report.as_deref()
    }

    fn __len__(&self) -> usize {
        self.plan.impulses.len()
    }

    fn __repr__(&self) -> String {
        format!("Plan(impulses={}, cost_mps={:.6e})", self.plan.impulses.len(), self.cost_mps())
    }
}

/// Ground-truth flight of a plan.
#[pyclass(name = "Simulation", module = "cislune", frozen)]
pub struct PySimulation {
    #[pyo3(get)]
    times_hours: Vec<f64>,
    /// LVLH deputy rows `[x, y, z, vx, vy, vz]` in km and km/s.
    #[pyo3(get)]
    deputy: Vec<[f64; 6]>,
    /// Synodic chief rows in km and km/s, Moon at the origin.
    #[pyo3(get)]
    chief: Vec<[f64; 6]>,
    metrics: RunMetrics,
}

fn metrics_dict<'py>(py: Python<'py>, m: &RunMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("cost_mps", m.cost_mps)?;
    d.set_item("final_rms_error_km", m.final_rms_error_km)?;
    d.set_item("final_position_error_km", m.final_position_error_km)?;
    d.set_item("final_error_pct", m.final_error_pct)?;
    d.set_item("stm_runtime_s", m.stm_runtime_s)?;
    d.set_item("solver_runtime_s", m.solver_runtime_s)?;
    Ok(d)
}

#[pymethods]
impl PySimulation {
    #[getter]
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        metrics_dict(py, &self.metrics)
    }

    #[getter]
    fn final_position_error_km(&self) -> f64 {
        self.metrics.final_position_error_km
    }
}

/// Solves for the minimum-total-Δv plan under the scenario's STM strategy.
#[pyfunction]
fn plan(py: Python<'_>, scenario: &PyScenario) -> PyResult<PyPlan> {
    let sc = &scenario.inner;
    let out = py.detach(|| plan_scenario(sc)).map_err(to_py)?;
    Ok(PyPlan {
        report: Some(out.report.to_text(&sc.sys)),
        duality_gap: Some(out.report.duality_gap),
        refine_iterations: Some(out.report.refine_iterations),
        plan: out.plan,
        sys: sc.sys,
    })
}

/// Flies `plan` in the nonlinear-chief ground truth.
#[pyfunction]
fn simulate(py: Python<'_>, plan: &PyPlan, scenario: &PyScenario) -> PyResult<PySimulation> {
    let sc = &scenario.inner;
    let out = py.detach(|| simulate_plan(&plan.plan, sc)).map_err(to_py)?;
    let sys = sc.sys;
    let deputy = out.log.deputy.iter().map(|x| {
        let d = x.dimensional(&sys);
        let v = d.to_vector();
        [v[0], v[1], v[2], v[3], v[4], v[5]]
    });
    let chief = out.log.chief.iter().map(|c| {
        let v = dimensionalize(c, &sys).to_vector();
        [v[0], v[1], v[2], v[3], v[4], v[5]]
    });
    Ok(PySimulation {
        times_hours: out.log.times.iter().map(|&t| sys.tu_to_hours(t)).collect(),
        deputy: deputy.collect(),
        chief: chief.collect(),
        metrics: out.metrics,
    })
}

/// RMS position error (km) of uncontrolled STM propagation against the truth.
///
/// Returns `(times_hours, errors_km)`; `strategy` defaults to the scenario's.
#[pyfunction]
#[pyo3(signature = (scenario, strategy=None, samples=None))]
fn propagation_error(
    py: Python<'_>,
    scenario: &PyScenario,
    strategy: Option<&str>,
    samples: Option<usize>,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let sc = &scenario.inner;
    let strat = match strategy {
        Some(s) => {
            let over: StrategyOverride = s.parse().map_err(to_py)?;
            scenario.file.strategy.overridden_by(&over).resolve(&sc.sys).map_err(to_py)?
        }
        None => sc.strategy.clone(),
    };
    let n = samples.unwrap_or(sc.truth.samples).max(2);
    let times = uniform_times(sc.t0(), sc.tf(), n - 1);
    let errors = py.detach(|| rms_propagation_error(&strat, sc, &times)).map_err(to_py)?;
    Ok((times.iter().map(|&t| sc.sys.tu_to_hours(t)).collect(), errors))
}

/// Seeded campaign; returns per-strategy statistics plus the trials CSV.
#[pyfunction]
#[pyo3(signature = (scenario, seed, trials, workers=0, strategies=None))]
fn monte_carlo<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    seed: u64,
    trials: usize,
    workers: usize,
    strategies: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let sc = &scenario.inner;
    let mut cfg = sc.montecarlo.clone();
    cfg.seed = seed;
    cfg.n_trials = trials;
    if let Some(s) = strategies {
        cfg.strategies = s;
    }
    let catalog = match &cfg.catalog {
        Some(p) => load_halo_catalog(p, &sc.sys),
        None => HaloCatalog::bundled(&sc.sys),
    }
    .map_err(to_py)?;
    let campaign = py
        .detach(|| run_campaign(&cfg, &sc.solver, &sc.truth, &sc.sys, &catalog, workers))
        .map_err(to_py)?;

    let out = PyDict::new(py);
    let per = PyDict::new(py);
    let metrics: [(&str, fn(&RunMetrics) -> f64); 3] = [
        ("final_error_pct", |m| m.final_error_pct),
        ("final_position_error_km", |m| m.final_position_error_km),
        ("cost_mps", |m| m.cost_mps),
    ];
    for s in &campaign.strategies {
        let d = PyDict::new(py);
        for (name, f) in metrics {
            if let Some(st) = campaign.stats(s, f) {
                let row = PyDict::new(py);
                row.set_item("median", st.median)?;
                row.set_item("mean", st.mean)?;
                row.set_item("min", st.min)?;
                row.set_item("max", st.max)?;
                d.set_item(name, row)?;
            }
        }
        d.set_item("failures", campaign.failures(s))?;
        per.set_item(s, d)?;
    }
    let mut buf = Vec::new();
    campaign.write_trials_csv(&mut buf, &sc.sys).map_err(to_py)?;
    out.set_item("strategies", per)?;
    out.set_item("trials_csv", String::from_utf8(buf).expect("csv writer emits utf-8"))?;
    Ok(out)
}

/// Receding-horizon run against the paired open-loop run.
#[pyfunction]
#[pyo3(signature = (scenario, seed=None, segments=None))]
fn mpc<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    seed: Option<u64>,
    segments: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let sc = &scenario.inner;
    let mut cfg = sc.mpc;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = segments {
        cfg.n_segments = n;
    }
    let out = py.detach(|| mpc_run(sc, &cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    for (label, run) in [("mpc", &out.mpc), ("open_loop", &out.open_loop)] {
        let m = metrics_dict(py, &run.metrics)?;
        m.set_item("executed_cost_mps", run.executed_cost_mps)?;
        m.set_item("segments", run.segments.len())?;
        d.set_item(label, m)?;
    }
    Ok(d)
}

#[pymodule]
#[pyo3(name = "cislune")]
fn cislune_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CisluneError", m.py().get_type::<CisluneError>())?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyPlan>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(propagation_error, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(mpc, m)?)?;
    m.add("BUNDLED_SCENARIOS", cislune::scenario::BUNDLED.iter().map(|(n, _)| *n).collect::<Vec<_>>())?;
    Ok(())
}
