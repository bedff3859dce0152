//! Receding-horizon re-planning under navigation and execution noise.
//!
//! The window is split into equal segments. At each segment start the
//! planner sees a noisy estimate of the chief and deputy, re-plans to the
//! fixed terminal state, and only the burns falling inside the segment are
//! executed (with execution noise) before the next re-plan.
//!
//! Noise draws come from ChaCha8 streams keyed by event: the navigation
//! fix at segment `s`, and burn `j` (in time order) of segment `s`. The
//! open-loop comparison plans once from the segment-0 fix and keys each of
//! its burns by the segment it falls in, so both runs consume the same
//! draws for shared events.

use std::io::Write;
use std::time::Duration;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cr3bp::{Cr3bpSystem, SynodicState};
use crate::error::{Error, Result};
use crate::kd::{Impulse, ManeuverPlan};
use crate::relative::RelativeState;
use crate::scenario::{plan_transfer, MpcConfig, NoiseModel, Scenario};
use crate::sim::{propagate_truth, run_metrics, RunMetrics, TrajectoryLog};
use crate::stm::uniform_times;

const NAV_STREAM: u64 = 1 << 62;
const BURN_STREAM: u64 = 2 << 62;

fn event_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn nav_rng(seed: u64, segment: usize) -> ChaCha8Rng {
    event_rng(seed, NAV_STREAM | segment as u64)
}

fn burn_rng(seed: u64, segment: usize, order: usize) -> ChaCha8Rng {
    event_rng(seed, BURN_STREAM | ((segment as u64) << 32) | order as u64)
}

fn gaussian3(rng: &mut impl Rng, std: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * std)
}

/// Noisy estimates of the chief (synodic) and deputy (LVLH) states, all
/// nondimensional. Six chief draws then six deputy draws are consumed
/// whatever the standard deviations.
pub fn perturb_estimate(
    chief: &SynodicState,
    deputy: &RelativeState,
    noise: &NoiseModel,
    sys: &Cr3bpSystem,
    rng: &mut impl Rng,
) -> (SynodicState, RelativeState) {
    let vu = sys.vu();
    let dr = gaussian3(rng, noise.chief_position_km) / sys.du;
    let dv = gaussian3(rng, noise.chief_velocity_kmps) / vu;
    let drho = gaussian3(rng, noise.deputy_position_km) / sys.du;
    let drho_dot = gaussian3(rng, noise.deputy_velocity_kmps) / vu;
    (
        SynodicState { r: chief.r + dr, v: chief.v + dv, t: chief.t },
        RelativeState { rho: deputy.rho + drho, rho_dot: deputy.rho_dot + drho_dot, t: deputy.t },
    )
}

/// Executed burn for a commanded `dv` at `t` (nondimensional): time
/// offset, additive magnitude error floored at zero, and a tilt about a
/// uniformly random axis perpendicular to `dv`.
pub fn perturb_maneuver(
    dv: &Vector3<f64>,
    t: f64,
    noise: &NoiseModel,
    sys: &Cr3bpSystem,
    rng: &mut impl Rng,
) -> (Vector3<f64>, f64) {
    let dt = rng.sample::<f64, _>(StandardNormal) * noise.maneuver_time_s;
    let dm = rng.sample::<f64, _>(StandardNormal) * noise.maneuver_magnitude_kmps;
    let phi = rng.random::<f64>() * std::f64::consts::TAU;
    let tilt = (rng.sample::<f64, _>(StandardNormal) * noise.maneuver_direction_deg).to_radians();
    let t1 = t + sys.seconds_to_tu(dt);
    let m = dv.norm();
    if m == 0.0 {
        return (*dv, t1);
    }
    let m1 = (m + dm / sys.vu()).max(0.0);
    let d = dv / m;
    let e1 = d.cross(&if d.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() }).normalize();
    let e2 = d.cross(&e1);
    let axis = e1 * phi.cos() + e2 * phi.sin();
    // axis ⟂ dv, so Rodrigues reduces to two terms
    let rotated = dv * tilt.cos() + axis.cross(dv) * tilt.sin();
    (rotated * (m1 / m), t1)
}

/// Burns executed in one segment, with the plan they came from.
#[derive(Debug, Clone)]
pub struct SegmentRecord {
    pub segment: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub plan: ManeuverPlan,
    pub executed: Vec<Impulse>,
    pub solver_runtime: Duration,
    pub stm_runtime: Duration,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub log: TrajectoryLog,
    pub metrics: RunMetrics,
    /// Sum of executed burn magnitudes (m/s).
    pub executed_cost_mps: f64,
    pub segments: Vec<SegmentRecord>,
}

#[derive(Debug, Clone)]
pub struct MpcOutput {
    pub mpc: ClosedLoopRun,
    pub open_loop: ClosedLoopRun,
}

/// Segment index of `t` for `n` equal segments of `[t0, tf]`.
fn segment_of(t: f64, t0: f64, tf: f64, n: usize) -> usize {
    (((t - t0) / (tf - t0) * n as f64).floor().max(0.0) as usize).min(n - 1)
}

fn execute(
    burns: &[Impulse],
    segment: usize,
    noise: &NoiseModel,
    seed: u64,
    sys: &Cr3bpSystem,
    t_lo: f64,
    t_hi: f64,
) -> Vec<Impulse> {
    burns
        .iter()
        .enumerate()
        .map(|(order, b)| {
            let mut rng = burn_rng(seed, segment, order);
            let (dv, t) = perturb_maneuver(&b.dv, b.t, noise, sys, &mut rng);
            Impulse { t: t.clamp(t_lo, t_hi), dv, grid_index: b.grid_index }
        })
        .collect()
}

fn executed_cost(burns: &[Impulse], sys: &Cr3bpSystem) -> f64 {
    burns.iter().map(|b| b.dv.norm()).sum::<f64>() * sys.vu() * 1000.0
}

fn append_log(into: &mut TrajectoryLog, part: TrajectoryLog) {
    let skip = usize::from(matches!((into.times.last(), part.times.first()), (Some(a), Some(b)) if a == b));
    into.times.extend_from_slice(&part.times[skip..]);
    into.chief.extend_from_slice(&part.chief[skip..]);
    into.deputy.extend_from_slice(&part.deputy[skip..]);
    into.impulses.extend(part.impulses);
}

fn plan_from(
    scenario: &Scenario,
    chief: &SynodicState,
    deputy: &RelativeState,
) -> Result<crate::scenario::PlanOutput> {
    plan_transfer(
        &scenario.sys,
        chief,
        deputy,
        &scenario.deputy_f,
        scenario.tf(),
        scenario.n_grid_steps,
        &scenario.strategy,
        &scenario.solver,
        scenario.truth.chief_tol,
    )
}

/// Closed-loop run with `cfg`, plus the open-loop run under the same noise.
pub fn mpc_run(scenario: &Scenario, cfg: &MpcConfig) -> Result<MpcOutput> {
    cfg.validate()?;
    let sys = &scenario.sys;
    let (t0, tf) = (scenario.t0(), scenario.tf());
    let n = cfg.n_segments;
    let samples = uniform_times(t0, tf, scenario.truth.samples - 1);
    let bounds: Vec<f64> = (0..=n).map(|s| if s == n { tf } else { t0 + (tf - t0) * s as f64 / n as f64 }).collect();
    let tol = scenario.truth.tol;

    let ballistic = propagate_truth(sys, &scenario.chief0, &scenario.deputy0, &[], tf, tol, &[])?;
    let (est_chief0, est_deputy0) =
        perturb_estimate(&scenario.chief0, &scenario.deputy0, &cfg.noise, sys, &mut nav_rng(cfg.seed, 0));

    // open loop: one plan from the first fix, every burn executed
    let first = plan_from(scenario, &est_chief0, &est_deputy0)?;
    let mut ol_exec = Vec::new();
    for s in 0..n {
        let burns: Vec<Impulse> = first
            .plan
            .impulses
            .iter()
            .filter(|b| segment_of(b.t, t0, tf, n) == s)
            .cloned()
            .collect();
        ol_exec.extend(execute(&burns, s, &cfg.noise, cfg.seed, sys, t0, tf));
    }
    let ol_log = propagate_truth(sys, &scenario.chief0, &scenario.deputy0, &ol_exec, tf, tol, &samples)?;
    let ol_cost = executed_cost(&ol_exec, sys);
    let open_loop = ClosedLoopRun {
        metrics: RunMetrics {
            stm_runtime_s: first.report.stm_runtime.as_secs_f64(),
            solver_runtime_s: first.report.solver_runtime.as_secs_f64(),
            ..run_metrics(ol_cost, &ol_log.final_deputy(), &ballistic.final_deputy(), &scenario.deputy_f, sys)
        },
        log: ol_log,
        executed_cost_mps: ol_cost,
        segments: vec![SegmentRecord {
            segment: 0,
            t_start: t0,
            t_end: tf,
            plan: first.plan.clone(),
            executed: ol_exec,
            solver_runtime: first.report.solver_runtime,
            stm_runtime: first.report.stm_runtime,
        }],
    };

    // closed loop
    let mut log = TrajectoryLog::default();
    let mut chief = scenario.chief0;
    let mut deputy = scenario.deputy0;
    let mut segments = Vec::with_capacity(n);
    for s in 0..n {
        let (lo, hi) = (bounds[s], bounds[s + 1]);
        let out = if s == 0 {
            first.clone()
        } else {
            let (c, d) = perturb_estimate(&chief, &deputy, &cfg.noise, sys, &mut nav_rng(cfg.seed, s));
            plan_from(scenario, &c, &d).map_err(|e| Error::Socp(format!("re-plan at segment {s} failed: {e}")))?
        };
        let burns: Vec<Impulse> = out
            .plan
            .impulses
            .iter()
            .filter(|b| segment_of(b.t, t0, tf, n) == s)
            .cloned()
            .collect();
        let executed = execute(&burns, s, &cfg.noise, cfg.seed, sys, lo, if s + 1 == n { tf } else { hi });
        let seg_samples: Vec<f64> = samples
            .iter()
            .copied()
            .filter(|&t| t >= lo && (t < hi || s + 1 == n))
            .collect();
        let part = propagate_truth(sys, &chief, &deputy, &executed, hi, tol, &seg_samples)?;
        chief = SynodicState { t: hi, ..part.final_chief() };
        deputy = RelativeState { t: hi, ..part.final_deputy() };
        append_log(&mut log, part);
        segments.push(SegmentRecord {
            segment: s,
            t_start: lo,
            t_end: hi,
            plan: out.plan,
            executed,
            solver_runtime: out.report.solver_runtime,
            stm_runtime: out.report.stm_runtime,
        });
    }
    let executed: Vec<Impulse> = segments.iter().flat_map(|g| g.executed.iter().cloned()).collect();
    let cost = executed_cost(&executed, sys);
    let metrics = RunMetrics {
        stm_runtime_s: segments.iter().map(|g| g.stm_runtime.as_secs_f64()).sum(),
        solver_runtime_s: segments.iter().map(|g| g.solver_runtime.as_secs_f64()).sum(),
        ..run_metrics(cost, &log.final_deputy(), &ballistic.final_deputy(), &scenario.deputy_f, sys)
    };
    Ok(MpcOutput {
        mpc: ClosedLoopRun { log, metrics, executed_cost_mps: cost, segments },
        open_loop,
    })
}

impl MpcOutput {
    /// Terminal error, percentage and cost for both runs.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["metric", "mpc", "open_loop"])?;
        let rows: [(&str, fn(&ClosedLoopRun) -> f64); 4] = [
            ("terminal_position_error_km", |r| r.metrics.final_position_error_km),
            ("terminal_position_error_pct", |r| r.metrics.final_error_pct),
            ("cost_mps", |r| r.executed_cost_mps),
            ("terminal_rms_error_km", |r| r.metrics.final_rms_error_km),
        ];
        for (name, f) in rows {
            wr.write_record([name.to_string(), format!("{:.16e}", f(&self.mpc)), format!("{:.16e}", f(&self.open_loop))])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Executed burns of every segment as `segment,t_hours,dv_x_mps,...`.
pub fn write_executed_csv<W: Write>(w: W, run: &ClosedLoopRun, sys: &Cr3bpSystem) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["segment", "t_hours", "dv_x_mps", "dv_y_mps", "dv_z_mps"])?;
    let k = sys.vu() * 1000.0;
    for g in &run.segments {
        for b in &g.executed {
            wr.write_record([
                g.segment.to_string(),
                format!("{:.16e}", sys.tu_to_hours(b.t)),
                format!("{:.16e}", b.dv.x * k),
                format!("{:.16e}", b.dv.y * k),
                format!("{:.16e}", b.dv.z * k),
            ])?;
        }
    }
    wr.flush()?;
    Ok(())
}
