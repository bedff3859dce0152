//! Ground-truth simulation: the chief follows the nonlinear CR3BP and the
//! deputy the linear relative plant along it, with impulses applied as
//! instantaneous velocity changes.

use std::io::{Read, Write};

use nalgebra::{SVector, Vector3, Vector6};

use crate::cr3bp::{accel_raw, dimensionalize, ChiefTrajectory, Cr3bpSystem, SynodicState};
use crate::error::{Error, Result};
use crate::kd::{Impulse, ManeuverPlan, SolverReport};
use crate::ode::Dopri5;
use crate::relative::RelativeState;
use crate::scenario::Scenario;
use crate::stm::{forward_stms, plant_raw, uniform_times, StmStrategy};

/// Sampled ground-truth states. States at an impulse epoch are post-burn.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub times: Vec<f64>,
    pub chief: Vec<SynodicState>,
    pub deputy: Vec<RelativeState>,
    pub impulses: Vec<Impulse>,
}

/// Per-run performance figures in I/O units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunMetrics {
    pub cost_mps: f64,
    /// RMS over the six components of the dimensional final-state error.
    pub final_rms_error_km: f64,
    /// Norm of the final relative-position error.
    pub final_position_error_km: f64,
    /// Position error relative to the commanded change of the final
    /// position against ballistic drift, in percent.
    pub final_error_pct: f64,
    pub stm_runtime_s: f64,
    pub solver_runtime_s: f64,
}

impl RunMetrics {
    pub fn with_runtimes(self, report: &SolverReport) -> Self {
        Self {
            stm_runtime_s: report.stm_runtime.as_secs_f64(),
            solver_runtime_s: report.solver_runtime.as_secs_f64(),
            ..self
        }
    }
}

fn truth_rhs(sys: Cr3bpSystem) -> impl Fn(f64, &SVector<f64, 12>) -> SVector<f64, 12> {
    move |_t, y| {
        let r = Vector3::new(y[0], y[1], y[2]);
        let v = Vector3::new(y[3], y[4], y[5]);
        let acc = accel_raw(sys.mu, &r, &v);
        let a = plant_raw(&sys, &r, &v);
        let x: Vector6<f64> = y.fixed_rows::<6>(6).into();
        let dx = a * x;
        let mut out = SVector::<f64, 12>::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&v);
        out.fixed_rows_mut::<3>(3).copy_from(&acc);
        out.fixed_rows_mut::<6>(6).copy_from(&dx);
        out
    }
}

fn pack(chief: &SynodicState, deputy: &RelativeState) -> SVector<f64, 12> {
    let mut y = SVector::<f64, 12>::zeros();
    y.fixed_rows_mut::<6>(0).copy_from(&chief.to_vector());
    y.fixed_rows_mut::<6>(6).copy_from(&deputy.to_vector());
    y
}

fn unpack(y: &SVector<f64, 12>, t: f64) -> (SynodicState, RelativeState) {
    let c: Vector6<f64> = y.fixed_rows::<6>(0).into();
    let d: Vector6<f64> = y.fixed_rows::<6>(6).into();
    (SynodicState::from_vector(&c, t), RelativeState::from_vector(&d, t))
}

/// Integrates chief and deputy from `chief0.t` to `tf`, applying `burns`
/// (clamped into the window) and recording the requested sample times.
/// The final state at `tf` is always the last log entry.
pub fn propagate_truth(
    sys: &Cr3bpSystem,
    chief0: &SynodicState,
    deputy0: &RelativeState,
    burns: &[Impulse],
    tf: f64,
    tol: f64,
    sample_times: &[f64],
) -> Result<TrajectoryLog> {
    let t0 = chief0.t;
    if !(tf >= t0) {
        return Err(Error::InvalidInput(format!("truth window is reversed ({t0} > {tf})")));
    }
    let mut burns: Vec<Impulse> = burns
        .iter()
        .map(|b| Impulse { t: b.t.clamp(t0, tf), ..*b })
        .collect();
    burns.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut samples: Vec<f64> = sample_times.iter().copied().filter(|&t| t >= t0 && t < tf).collect();
    samples.sort_by(f64::total_cmp);
    samples.dedup();
    samples.push(tf);

    let ode = Dopri5::with_tol(tol);
    let rhs = truth_rhs(*sys);
    let mut log = TrajectoryLog { impulses: burns.clone(), ..Default::default() };
    let mut y = pack(chief0, deputy0);
    let mut t = t0;
    let mut next_burn = 0;
    let mut next_sample = 0;
    // arcs between consecutive burn epochs, densely sampled
    loop {
        while next_burn < burns.len() && burns[next_burn].t <= t {
            let dv = burns[next_burn].dv;
            for i in 0..3 {
                y[9 + i] += dv[i];
            }
            next_burn += 1;
        }
        let arc_end = if next_burn < burns.len() { burns[next_burn].t } else { tf };
        let sol = ode.integrate_dense(&rhs, t, y, arc_end)?;
        while next_sample < samples.len() && samples[next_sample] < arc_end {
            let ts = samples[next_sample];
            let ys = if ts == t { y } else { sol.eval(ts) };
            let (c, d) = unpack(&ys, ts);
            log.times.push(ts);
            log.chief.push(c);
            log.deputy.push(d);
            next_sample += 1;
        }
        y = sol.final_state();
        t = arc_end;
        if next_burn >= burns.len() {
            break;
        }
    }
    // burns exactly at tf and the final sample
    while next_burn < burns.len() {
        let dv = burns[next_burn].dv;
        for i in 0..3 {
            y[9 + i] += dv[i];
        }
        next_burn += 1;
    }
    let (c, d) = unpack(&y, tf);
    log.times.push(tf);
    log.chief.push(c);
    log.deputy.push(d);
    Ok(log)
}

impl TrajectoryLog {
    pub fn final_deputy(&self) -> RelativeState {
        *self.deputy.last().expect("log always holds the final state")
    }

    pub fn final_chief(&self) -> SynodicState {
        *self.chief.last().expect("log always holds the final state")
    }

    /// Writes the chief (synodic, km) as `t_hours,x_km,...,vz_kmps`.
    pub fn write_chief_csv<W: Write>(&self, w: W, sys: &Cr3bpSystem) -> Result<()> {
        let rows = self.chief.iter().map(|c| {
            let d = dimensionalize(c, sys);
            (sys.tu_to_hours(c.t), d.to_vector())
        });
        write_state_csv(w, rows)
    }

    /// Writes the deputy (LVLH, km) as `t_hours,x_km,...,vz_kmps`.
    pub fn write_deputy_csv<W: Write>(&self, w: W, sys: &Cr3bpSystem) -> Result<()> {
        let rows = self.deputy.iter().map(|x| {
            let d = x.dimensional(sys);
            (d.t, d.to_vector())
        });
        write_state_csv(w, rows)
    }
}

pub const STATE_HEADER: [&str; 7] = ["t_hours", "x_km", "y_km", "z_km", "vx_kmps", "vy_kmps", "vz_kmps"];

fn write_state_csv<W: Write>(w: W, rows: impl Iterator<Item = (f64, Vector6<f64>)>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(STATE_HEADER)?;
    for (t, x) in rows {
        let mut rec = vec![format!("{t:.16e}")];
        rec.extend(x.iter().map(|v| format!("{v:.16e}")));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a trajectory CSV back as `(t_hours, state)` rows in I/O units.
pub fn read_state_csv<R: Read>(r: R) -> Result<Vec<(f64, Vector6<f64>)>> {
    let mut rd = csv::Reader::from_reader(r);
    if rd.headers()?.iter().collect::<Vec<_>>() != STATE_HEADER {
        return Err(Error::Config("unexpected trajectory header".into()));
    }
    let mut out = Vec::new();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec?;
        let mut vals = [0.0; 7];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = rec
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Catalog { row: row + 2, msg: format!("bad field {i}") })?;
        }
        out.push((vals[0], Vector6::from_column_slice(&vals[1..])));
    }
    Ok(out)
}

/// Dimensional final-state error figures `(rms6, position norm)`.
pub fn final_errors(actual: &RelativeState, target: &RelativeState, sys: &Cr3bpSystem) -> (f64, f64) {
    let a = actual.dimensional(sys).to_vector();
    let b = target.dimensional(sys).to_vector();
    let e = a - b;
    ((e.norm_squared() / 6.0).sqrt(), e.fixed_rows::<3>(0).norm())
}

/// Output of [`simulate`].
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub log: TrajectoryLog,
    pub metrics: RunMetrics,
}

/// Executes `plan` in the ground truth of `scenario`. Runtimes are left at
/// zero; see [`RunMetrics::with_runtimes`].
pub fn simulate(plan: &ManeuverPlan, scenario: &Scenario) -> Result<SimOutput> {
    let sys = &scenario.sys;
    let (t0, tf) = (scenario.t0(), scenario.tf());
    if plan.impulses.iter().any(|i| i.t < t0 || i.t > tf) {
        return Err(Error::InvalidInput("plan has impulses outside the control window".into()));
    }
    let samples = uniform_times(t0, tf, scenario.truth.samples - 1);
    let log = propagate_truth(
        sys,
        &scenario.chief0,
        &scenario.deputy0,
        &plan.impulses,
        tf,
        scenario.truth.tol,
        &samples,
    )?;
    let ballistic = propagate_truth(sys, &scenario.chief0, &scenario.deputy0, &[], tf, scenario.truth.tol, &[])?;
    let metrics = run_metrics(plan.cost_mps(sys), &log.final_deputy(), &ballistic.final_deputy(), &scenario.deputy_f, sys);
    Ok(SimOutput { log, metrics })
}

/// Metrics from the executed cost and the final truth states.
pub fn run_metrics(
    cost_mps: f64,
    actual: &RelativeState,
    ballistic: &RelativeState,
    target: &RelativeState,
    sys: &Cr3bpSystem,
) -> RunMetrics {
    let (rms, pos) = final_errors(actual, target, sys);
    let denom = (target.rho - ballistic.rho).norm() * sys.du;
    let pct = if denom > 0.0 { 100.0 * pos / denom } else { f64::INFINITY };
    RunMetrics {
        cost_mps,
        final_rms_error_km: rms,
        final_position_error_km: pos,
        final_error_pct: pct,
        stm_runtime_s: 0.0,
        solver_runtime_s: 0.0,
    }
}

/// RMS position error (km, over the three components) between uncontrolled
/// STM propagation of the initial deputy state and the ground truth.
pub fn rms_propagation_error(
    strategy: &StmStrategy,
    scenario: &Scenario,
    sample_times: &[f64],
) -> Result<Vec<f64>> {
    let sys = &scenario.sys;
    let t0 = scenario.t0();
    let t_end = sample_times.iter().copied().fold(t0, f64::max);
    if sample_times.iter().any(|&t| t < t0) {
        return Err(Error::InvalidInput("sample times precede the scenario start".into()));
    }
    if t_end == t0 {
        return Ok(vec![0.0; sample_times.len()]);
    }
    let traj = ChiefTrajectory::propagate(&scenario.chief0, t_end, scenario.truth.chief_tol, sys)?;
    let mut order: Vec<usize> = (0..sample_times.len()).collect();
    order.sort_by(|&a, &b| sample_times[a].total_cmp(&sample_times[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| sample_times[i]).collect();
    let phis = forward_stms(&traj, strategy, &sorted)?;
    let truth = propagate_truth(sys, &scenario.chief0, &scenario.deputy0, &[], t_end, scenario.truth.tol, &sorted)?;
    let x0 = scenario.deputy0.to_vector();
    let mut out = vec![0.0; sample_times.len()];
    for (k, &i) in order.iter().enumerate() {
        let t = sorted[k];
        let j = truth.times.partition_point(|&s| s < t).min(truth.times.len() - 1);
        let err = (phis[k] * x0).fixed_rows::<3>(0) - truth.deputy[j].rho;
        out[i] = if t == t0 { 0.0 } else { err.norm() * sys.du / 3f64.sqrt() };
    }
    Ok(out)
}

/// Writes `t_hours,<label>...` error series in km.
pub fn write_error_csv<W: Write>(
    w: W,
    times_hours: &[f64],
    series: &[(String, Vec<f64>)],
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["t_hours".to_string()];
    header.extend(series.iter().map(|(l, _)| format!("{l}_km")));
    wr.write_record(&header)?;
    for (k, t) in times_hours.iter().enumerate() {
        let mut rec = vec![format!("{t:.16e}")];
        rec.extend(series.iter().map(|(_, s)| format!("{:.16e}", s[k])));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}
