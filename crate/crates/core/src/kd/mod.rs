//! Reachable-set impulsive control solver.
//!
//! Given the pseudostate ω and the control maps Γ(t_j) on a candidate grid,
//! the solver finds the dual vector λ maximizing λᵀω subject to
//! `‖Γ(t_j)ᵀλ‖ ≤ 1` everywhere on the grid, then recovers impulse magnitudes
//! along the contact directions at the times where the bound is attained.
//! All quantities are nondimensional; conversions happen at I/O.

mod nnls;
mod socp;

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix6x3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::cr3bp::Cr3bpSystem;
use crate::error::{Error, Result};
use crate::relative::RelativeState;
use crate::stm::{ControlGrid, ControlMap};

pub use nnls::nnls;
use socp::{contact_raw, range_basis, solve_dual_unit, DualOutcome};

/// Contact values at or above `1 - ACTIVE_TOL` mark candidate burn times
/// for the magnitude fit.
const ACTIVE_TOL: f64 = 1e-6;
/// Relative pseudostate residual above which a plan is flagged.
const RESIDUAL_TOL: f64 = 1e-6;

/// Control target `ω = x_f − Φ(t_0, t_f) x_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pseudostate {
    pub omega: Vector6<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualVector {
    pub lambda: Vector6<f64>,
}

/// Working set of grid indices, sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CandidateSet {
    indices: Vec<usize>,
}

impl CandidateSet {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.indices.binary_search(&idx).is_ok()
    }
}

/// Contact function value and its maximizing unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    pub value: f64,
    /// `None` when the value is below 1e-14 and the direction is undefined.
    pub direction: Option<Vector3<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impulse {
    /// Epoch (TU).
    pub t: f64,
    /// LVLH velocity change (DU/TU).
    pub dv: Vector3<f64>,
    pub grid_index: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ManeuverPlan {
    pub impulses: Vec<Impulse>,
    /// Σ‖dv‖ (DU/TU).
    pub cost: f64,
    /// `‖ω − Σ Γ dv‖ / ‖ω‖` achieved by the impulses.
    pub residual: f64,
    /// Set when the residual exceeds the extraction tolerance.
    pub reachability_deficient: bool,
}

impl ManeuverPlan {
    pub fn empty() -> Self {
        Self::default()
    }

    fn from_impulses(mut impulses: Vec<Impulse>, residual: f64) -> Self {
        impulses.sort_by(|a, b| a.t.total_cmp(&b.t));
        let cost = impulses.iter().map(|i| i.dv.norm()).sum();
        Self {
            impulses,
            cost,
            residual,
            reachability_deficient: residual > RESIDUAL_TOL,
        }
    }

    pub fn cost_mps(&self, sys: &Cr3bpSystem) -> f64 {
        self.cost * sys.vu() * 1000.0
    }

    /// Writes `t_hours,dv_x_mps,dv_y_mps,dv_z_mps` rows (LVLH).
    pub fn write_csv<W: Write>(&self, w: W, sys: &Cr3bpSystem) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t_hours", "dv_x_mps", "dv_y_mps", "dv_z_mps"])?;
        let k = sys.vu() * 1000.0;
        for imp in &self.impulses {
            wr.write_record([
                format!("{:.16e}", sys.tu_to_hours(imp.t)),
                format!("{:.16e}", imp.dv.x * k),
                format!("{:.16e}", imp.dv.y * k),
                format!("{:.16e}", imp.dv.z * k),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads impulses written by [`ManeuverPlan::write_csv`]. Grid indices are
    /// not stored and come back as `usize::MAX`.
    pub fn read_csv<R: Read>(r: R, sys: &Cr3bpSystem) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t_hours", "dv_x_mps", "dv_y_mps", "dv_z_mps"] {
            return Err(Error::Config(format!("unexpected plan header: {headers:?}")));
        }
        let k = sys.vu() * 1000.0;
        let mut impulses = Vec::new();
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec[i].trim().parse::<f64>().map_err(|_| Error::Catalog {
                    row: row + 2,
                    msg: format!("bad number `{}`", &rec[i]),
                })
            };
            impulses.push(Impulse {
                t: sys.hours_to_tu(f(0)?),
                dv: Vector3::new(f(1)?, f(2)?, f(3)?) / k,
                grid_index: usize::MAX,
            });
        }
        Ok(Self::from_impulses(impulses, 0.0))
    }
}

/// Solver tolerances and initialization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Optimality tolerance on the contact value.
    pub eps_cost: f64,
    /// Candidates whose contact drops below `1 - eps_remove` are dropped.
    pub eps_remove: f64,
    pub init_stride: usize,
    pub init_keep: usize,
    pub max_refine_iters: usize,
    pub socp_tol: f64,
    /// Pseudostates below this norm, relative to the boundary states, need no control.
    pub zero_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_cost: 1e-5,
            eps_remove: 1e-2,
            init_stride: 10,
            init_keep: 10,
            max_refine_iters: 100,
            socp_tol: 1e-10,
            zero_tol: 1e-14,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("solver.{name} must be positive, got {v}")))
            }
        };
        pos("eps_cost", self.eps_cost)?;
        pos("eps_remove", self.eps_remove)?;
        pos("socp_tol", self.socp_tol)?;
        pos("zero_tol", self.zero_tol)?;
        if self.eps_remove >= 1.0 {
            return Err(Error::Config("solver.eps_remove must be < 1".into()));
        }
        for (name, v) in [
            ("init_stride", self.init_stride),
            ("init_keep", self.init_keep),
            ("max_refine_iters", self.max_refine_iters),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("solver.{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Diagnostics from one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub lambda_opt: DualVector,
    pub refine_iterations: usize,
    /// λᵀω (DU/TU).
    pub dual_value: f64,
    /// Σ‖dv‖ (DU/TU).
    pub primal_cost: f64,
    pub duality_gap: f64,
    /// Largest contact value over the full grid at λ_opt.
    pub max_contact: f64,
    pub residual: f64,
    pub candidate_history: Vec<Vec<usize>>,
    pub newton_steps: usize,
    pub stm_runtime: Duration,
    pub solver_runtime: Duration,
    pub config: SolverConfig,
    pub strategy: String,
}

impl SolverReport {
    /// `key: value` lines.
    pub fn to_text(&self, sys: &Cr3bpSystem) -> String {
        let l = &self.lambda_opt.lambda;
        let mut s = String::new();
        let mps = sys.vu() * 1000.0;
        let _ = writeln!(s, "strategy: {}", self.strategy);
        let _ = writeln!(
            s,
            "lambda_opt: {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
            l[0], l[1], l[2], l[3], l[4], l[5]
        );
        let _ = writeln!(s, "refine_iterations: {}", self.refine_iterations);
        let _ = writeln!(s, "dual_value_mps: {:.16e}", self.dual_value * mps);
        let _ = writeln!(s, "primal_cost_mps: {:.16e}", self.primal_cost * mps);
        let _ = writeln!(s, "duality_gap: {:.6e}", self.duality_gap);
        let _ = writeln!(s, "max_contact: {:.16e}", self.max_contact);
        let _ = writeln!(s, "pseudostate_residual: {:.6e}", self.residual);
        let _ = writeln!(s, "newton_steps: {}", self.newton_steps);
        let _ = writeln!(s, "stm_runtime_s: {:.6}", self.stm_runtime.as_secs_f64());
        let _ = writeln!(s, "solver_runtime_s: {:.6}", self.solver_runtime.as_secs_f64());
        let _ = writeln!(s, "eps_cost: {:e}", self.config.eps_cost);
        let _ = writeln!(s, "eps_remove: {:e}", self.config.eps_remove);
        let _ = writeln!(s, "init_stride: {}", self.config.init_stride);
        let _ = writeln!(s, "init_keep: {}", self.config.init_keep);
        let _ = writeln!(s, "socp_tol: {:e}", self.config.socp_tol);
        for (i, h) in self.candidate_history.iter().enumerate() {
            let idx: Vec<String> = h.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "candidates_{i}: {}", idx.join(" "));
        }
        s
    }
}

/// `x_f − Φ(t_0, t_f) x_0` in nondimensional units.
pub fn pseudostate(x0: &RelativeState, xf: &RelativeState, grid: &ControlGrid) -> Pseudostate {
    Pseudostate { omega: xf.to_vector() - grid.phi0.phi * x0.to_vector() }
}

/// Contact function `‖Γᵀλ‖₂` and its argmax direction.
pub fn contact(gamma: &ControlMap, lambda: &DualVector) -> Contact {
    let (value, direction) = contact_raw(&gamma.gamma, &lambda.lambda);
    Contact { value, direction }
}

fn contact_sweep(grid: &ControlGrid, lambda: &Vector6<f64>) -> Vec<f64> {
    grid.gammas.iter().map(|g| (g.transpose() * lambda).norm()).collect()
}

/// Initial working set: every `init_stride`-th grid time scored by the
/// contact value along ω/‖ω‖, keeping the `init_keep` largest.
pub fn initialize(omega: &Pseudostate, grid: &ControlGrid, cfg: &SolverConfig) -> Result<CandidateSet> {
    let n = omega.omega.norm();
    if !(n > 0.0) {
        return Err(Error::InvalidInput("initialization needs a nonzero pseudostate".into()));
    }
    let dir = omega.omega / n;
    let mut scored: Vec<(usize, f64)> = (0..grid.len())
        .step_by(cfg.init_stride.max(1))
        .map(|j| (j, (grid.gammas[j].transpose() * dir).norm()))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(cfg.init_keep.max(1));
    Ok(CandidateSet::new(scored.into_iter().map(|(j, _)| j).collect()))
}

fn gammas_of<'a>(grid: &'a ControlGrid, set: &CandidateSet) -> Vec<&'a Matrix6x3<f64>> {
    set.indices.iter().map(|&j| &grid.gammas[j]).collect()
}

fn dual_outcome(
    omega: &Pseudostate,
    set: &CandidateSet,
    grid: &ControlGrid,
    cfg: &SolverConfig,
) -> Result<DualOutcome> {
    if set.is_empty() {
        return Err(Error::InvalidInput("candidate set is empty".into()));
    }
    if let Some(&bad) = set.indices.iter().find(|&&j| j >= grid.len()) {
        return Err(Error::InvalidInput(format!("candidate index {bad} outside grid")));
    }
    let n = omega.omega.norm();
    if !(n > 0.0) {
        return Err(Error::InvalidInput("dual needs a nonzero pseudostate".into()));
    }
    solve_dual_unit(&(omega.omega / n), &gammas_of(grid, set), cfg.socp_tol)
}

/// Maximizes λᵀω subject to `‖Γ(t_j)ᵀλ‖ ≤ 1` over the candidate set.
pub fn solve_dual(
    omega: &Pseudostate,
    set: &CandidateSet,
    grid: &ControlGrid,
    cfg: &SolverConfig,
) -> Result<DualVector> {
    match dual_outcome(omega, set, grid, cfg)? {
        DualOutcome::Optimal { lambda, .. } => Ok(DualVector { lambda }),
        DualOutcome::Unbounded { ray } => Err(Error::InfeasibleTarget(ray.dot(&omega.omega.normalize()))),
    }
}

#[derive(Debug, Clone)]
pub struct Refined {
    pub set: CandidateSet,
    pub lambda: DualVector,
    pub iterations: usize,
    pub history: Vec<Vec<usize>>,
    pub newton_steps: usize,
    pub max_contact: f64,
}

/// Alternates dual solves with full-grid contact sweeps until no grid time
/// exceeds `1 + eps_cost`.
pub fn refine(omega: &Pseudostate, grid: &ControlGrid, cfg: &SolverConfig) -> Result<Refined> {
    let n = omega.omega.norm();
    if !(n > 0.0) {
        return Err(Error::InvalidInput("refine needs a nonzero pseudostate".into()));
    }
    let all: Vec<&Matrix6x3<f64>> = grid.gammas.iter().collect();
    let (_, resid) = range_basis(&all, &(omega.omega / n));
    if resid.norm() > 1e-9 {
        return Err(Error::InfeasibleTarget(resid.norm()));
    }
    let mut set = initialize(omega, grid, cfg)?;
    let mut history = vec![set.indices.clone()];
    let mut newton_steps = 0;
    for iter in 1..=cfg.max_refine_iters {
        let lambda = match dual_outcome(omega, &set, grid, cfg)? {
            DualOutcome::Optimal { lambda, newton_steps: s } => {
                newton_steps += s;
                lambda
            }
            DualOutcome::Unbounded { ray } => {
                let reach = contact_sweep(grid, &ray);
                let best = (0..grid.len())
                    .filter(|j| !set.contains(*j))
                    .max_by(|&a, &b| reach[a].total_cmp(&reach[b]))
                    .ok_or(Error::InfeasibleTarget(ray.norm()))?;
                let mut idx = set.indices.clone();
                idx.push(best);
                set = CandidateSet::new(idx);
                history.push(set.indices.clone());
                continue;
            }
        };
        let g = contact_sweep(grid, &lambda);
        let max_contact = g.iter().cloned().fold(0.0, f64::max);
        let violators: Vec<usize> = (0..grid.len()).filter(|&j| g[j] > 1.0 + cfg.eps_cost).collect();
        if violators.is_empty() {
            return Ok(Refined {
                set,
                lambda: DualVector { lambda },
                iterations: iter,
                history,
                newton_steps,
                max_contact,
            });
        }
        let mut idx: Vec<usize> = set
            .indices
            .iter()
            .copied()
            .filter(|&j| g[j] >= 1.0 - cfg.eps_remove)
            .collect();
        idx.extend(violators);
        set = CandidateSet::new(idx);
        history.push(set.indices.clone());
    }
    Err(Error::RefineNonConvergence(cfg.max_refine_iters))
}

fn fit_magnitudes(
    omega: &Vector6<f64>,
    idx: &[usize],
    lambda: &Vector6<f64>,
    grid: &ControlGrid,
) -> Result<(Vec<Impulse>, f64)> {
    let mut cols = Vec::new();
    let mut dirs = Vec::new();
    for &j in idx {
        if let (_, Some(d)) = contact_raw(&grid.gammas[j], lambda) {
            cols.push(j);
            dirs.push(d);
        }
    }
    let a = DMatrix::from_fn(6, cols.len(), |r, c| (grid.gammas[cols[c]] * dirs[c])[r]);
    let b = DVector::from_column_slice(omega.as_slice());
    let m = nnls(&a, &b)?;
    let resid = (&b - &a * &m).norm() / omega.norm();
    let m_max = m.iter().cloned().fold(0.0, f64::max);
    let impulses = (0..cols.len())
        .filter(|&c| m[c] > 1e-12 * m_max)
        .map(|c| Impulse { t: grid.times[cols[c]], dv: dirs[c] * m[c], grid_index: cols[c] })
        .collect();
    Ok((impulses, resid))
}

/// Fixes burn directions from λ and fits nonnegative magnitudes that
/// minimize the pseudostate error with identity weighting.
pub fn extract_inputs(
    omega: &Pseudostate,
    set: &CandidateSet,
    lambda: &DualVector,
    grid: &ControlGrid,
) -> Result<ManeuverPlan> {
    let lam = &lambda.lambda;
    let active: Vec<usize> = set
        .indices
        .iter()
        .copied()
        .filter(|&j| (grid.gammas[j].transpose() * lam).norm() >= 1.0 - ACTIVE_TOL)
        .collect();
    let (mut impulses, mut resid) = fit_magnitudes(&omega.omega, &active, lam, grid)?;
    if resid > 1e-8 && active.len() < set.len() {
        let (imp2, res2) = fit_magnitudes(&omega.omega, &set.indices, lam, grid)?;
        if res2 < resid {
            impulses = imp2;
            resid = res2;
        }
    }
    Ok(ManeuverPlan::from_impulses(impulses, resid))
}

/// Full solve on a prebuilt grid.
pub fn solve(
    omega: &Pseudostate,
    x0: &RelativeState,
    xf: &RelativeState,
    grid: &ControlGrid,
    cfg: &SolverConfig,
) -> Result<(ManeuverPlan, SolverReport)> {
    cfg.validate()?;
    let started = Instant::now();
    let scale = xf.to_vector().norm().max((grid.phi0.phi * x0.to_vector()).norm());
    let mut report = SolverReport {
        lambda_opt: DualVector { lambda: Vector6::zeros() },
        refine_iterations: 0,
        dual_value: 0.0,
        primal_cost: 0.0,
        duality_gap: 0.0,
        max_contact: 0.0,
        residual: 0.0,
        candidate_history: Vec::new(),
        newton_steps: 0,
        stm_runtime: grid.build_time,
        solver_runtime: Duration::ZERO,
        config: *cfg,
        strategy: grid.strategy_tag.clone(),
    };
    if omega.omega.norm() <= cfg.zero_tol * scale || omega.omega.norm() == 0.0 {
        report.solver_runtime = started.elapsed();
        return Ok((ManeuverPlan::empty(), report));
    }
    let refined = refine(omega, grid, cfg)?;
    let plan = extract_inputs(omega, &refined.set, &refined.lambda, grid)?;
    let dual_value = refined.lambda.lambda.dot(&omega.omega);
    report.lambda_opt = refined.lambda;
    report.refine_iterations = refined.iterations;
    report.dual_value = dual_value;
    report.primal_cost = plan.cost;
    report.duality_gap = (dual_value - plan.cost).abs() / plan.cost.max(1e-300);
    report.max_contact = refined.max_contact;
    report.residual = plan.residual;
    report.candidate_history = refined.history;
    report.newton_steps = refined.newton_steps;
    report.solver_runtime = started.elapsed();
    Ok((plan, report))
}
