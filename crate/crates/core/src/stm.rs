//! State transition matrices and control maps for the LTV relative plant.
//!
//! Φ(t, t_f) is built by chaining LTI matrix exponentials, by integrating
//! the variational equations, or from the HCW / YA two-body baselines.

use std::fmt;
use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Matrix6, Matrix6x3, SVector, Vector3};

use crate::cr3bp::{accel_raw, jerk_raw, skew, tidal_tensor, ChiefTrajectory, Cr3bpSystem, SynodicState};
use crate::error::{Error, Result};
use crate::expm::expm;
use crate::ode::Dopri5;
use crate::relative::{plant_matrix, ControlMatrixB, PlantMatrix};
use crate::twobody::{hcw_stm, ya_stm, KeplerElements};

/// Transition matrix from `t_from` to `t_to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stm {
    pub phi: Matrix6<f64>,
    pub t_from: f64,
    pub t_to: f64,
}

impl Stm {
    pub fn identity(t: f64) -> Self {
        Self { phi: Matrix6::identity(), t_from: t, t_to: t }
    }

    /// `Φ B`, the effect at `t_to` of a velocity impulse at `t_from`.
    pub fn control_map(&self) -> ControlMap {
        ControlMap { gamma: gamma_of(&self.phi), t: self.t_from }
    }
}

/// Control map Γ(t) = Φ(t, t_f) B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlMap {
    pub gamma: Matrix6x3<f64>,
    pub t: f64,
}

fn gamma_of(phi: &Matrix6<f64>) -> Matrix6x3<f64> {
    phi * ControlMatrixB::matrix()
}

/// Where the LTI plant is sampled within each chained segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlantEval {
    #[default]
    SegmentStart,
    Midpoint,
}

/// How Φ is produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StmStrategy {
    /// Chained LTI exponentials with segments no longer than `step` (TU).
    MatrixExponential { step: f64, eval: PlantEval },
    /// Variational equations integrated to tolerance `tol`.
    NumericalIntegration { tol: f64 },
    /// HCW with the chief's osculating mean motion about the Moon at t0.
    Hcw,
    /// YA with the chief's osculating elements about the Moon at t0.
    YamanakaAnkersen,
}

impl StmStrategy {
    pub fn matrix_exponential(step: f64) -> Self {
        Self::MatrixExponential { step, eval: PlantEval::SegmentStart }
    }

    pub fn numerical_integration(tol: f64) -> Self {
        Self::NumericalIntegration { tol }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::MatrixExponential { step, .. } if !(step > 0.0 && step.is_finite()) => {
                Err(Error::InvalidInput(format!("matrix exponential step must be > 0, got {step}")))
            }
            Self::NumericalIntegration { tol } if !(tol > 0.0) => {
                Err(Error::InvalidInput(format!("integration tolerance must be > 0, got {tol}")))
            }
            _ => Ok(()),
        }
    }

    /// Short stable identifier.
    pub fn tag(&self) -> &'static str {
        match self {
            Self::MatrixExponential { .. } => "matrix-exponential",
            Self::NumericalIntegration { .. } => "numerical-integration",
            Self::Hcw => "hcw",
            Self::YamanakaAnkersen => "yamanaka-ankersen",
        }
    }

    pub fn is_cr3bp(&self) -> bool {
        matches!(self, Self::MatrixExponential { .. } | Self::NumericalIntegration { .. })
    }
}

impl fmt::Display for StmStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MatrixExponential { step, eval } => {
                let at = match eval {
                    PlantEval::SegmentStart => "start",
                    PlantEval::Midpoint => "midpoint",
                };
                write!(f, "matrix-exponential(step={step:e} TU, eval={at})")
            }
            Self::NumericalIntegration { tol } => write!(f, "numerical-integration(tol={tol:e})"),
            Self::Hcw => write!(f, "hcw"),
            Self::YamanakaAnkersen => write!(f, "yamanaka-ankersen"),
        }
    }
}

/// Precomputed control maps over the candidate maneuver times.
#[derive(Debug, Clone)]
pub struct ControlGrid {
    pub times: Vec<f64>,
    pub gammas: Vec<Matrix6x3<f64>>,
    /// Φ(t_0, t_f).
    pub phi0: Stm,
    pub strategy_tag: String,
    pub build_time: Duration,
}

impl ControlGrid {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn tf(&self) -> f64 {
        *self.times.last().expect("grid is never empty")
    }

    pub fn control_map(&self, idx: usize) -> ControlMap {
        ControlMap { gamma: self.gammas[idx], t: self.times[idx] }
    }

    /// Writes the grid cache.
    ///
    /// Layout: a `n_times,t0,tf,strategy` header line and its values, a `phi0`
    /// line with the 36 row-major entries of Φ(t_0, t_f), a column header,
    /// then one row per time holding `t` and the 18 row-major entries of Γ.
    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n_times,t0,tf,strategy")?;
        writeln!(w, "{},{:e},{:e},{}", self.len(), self.t0(), self.tf(), self.strategy_tag)?;
        write!(w, "phi0")?;
        for i in 0..6 {
            for j in 0..6 {
                write!(w, ",{:e}", self.phi0.phi[(i, j)])?;
            }
        }
        writeln!(w)?;
        write!(w, "t")?;
        for i in 0..6 {
            for j in 0..3 {
                write!(w, ",g{i}{j}")?;
            }
        }
        writeln!(w)?;
        for (t, g) in self.times.iter().zip(&self.gammas) {
            write!(w, "{t:e}")?;
            for i in 0..6 {
                for j in 0..3 {
                    write!(w, ",{:e}", g[(i, j)])?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads a cache written by [`ControlGrid::write_cache`].
    pub fn read_cache<R: BufRead>(r: R) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Config(format!("grid cache line {line}: {msg}"));
        let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
        if lines.len() < 4 || lines[0].trim() != "n_times,t0,tf,strategy" {
            return Err(bad(1, "missing header"));
        }
        let head: Vec<&str> = lines[1].splitn(4, ',').collect();
        if head.len() != 4 {
            return Err(bad(2, "expected 4 fields"));
        }
        let num = |s: &str, line: usize| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| bad(line, &format!("bad number `{s}`")))
        };
        let n: usize = head[0].trim().parse().map_err(|_| bad(2, "bad n_times"))?;
        let t0 = num(head[1], 2)?;
        let tf = num(head[2], 2)?;
        let tag = head[3].trim().to_string();
        let phi_fields: Vec<&str> = lines[2].split(',').collect();
        if phi_fields.len() != 37 || phi_fields[0] != "phi0" {
            return Err(bad(3, "expected phi0 with 36 entries"));
        }
        let mut phi = Matrix6::zeros();
        for k in 0..36 {
            phi[(k / 6, k % 6)] = num(phi_fields[k + 1], 3)?;
        }
        let rows = &lines[4..];
        if rows.len() != n {
            return Err(bad(5, &format!("expected {n} rows, found {}", rows.len())));
        }
        let mut times = Vec::with_capacity(n);
        let mut gammas = Vec::with_capacity(n);
        for (k, row) in rows.iter().enumerate() {
            let f: Vec<&str> = row.split(',').collect();
            if f.len() != 19 {
                return Err(bad(k + 5, "expected 19 fields"));
            }
            times.push(num(f[0], k + 5)?);
            let mut g = Matrix6x3::zeros();
            for m in 0..18 {
                g[(m / 3, m % 3)] = num(f[m + 1], k + 5)?;
            }
            gammas.push(g);
        }
        Ok(Self {
            times,
            gammas,
            phi0: Stm { phi, t_from: t0, t_to: tf },
            strategy_tag: tag,
            build_time: Duration::ZERO,
        })
    }
}

/// Plant matrix without validity checks, for use inside integrator closures.
pub(crate) fn plant_raw(sys: &Cr3bpSystem, r: &Vector3<f64>, v: &Vector3<f64>) -> Matrix6<f64> {
    let mu = sys.mu;
    let a = accel_raw(mu, r, v);
    let jk = jerk_raw(mu, r, v, &a);
    let h = r.cross(v);
    let hn = h.norm();
    let rn = r.norm();
    let k_hat = -r / rn;
    let j_hat = -h / hn;
    let i_hat = j_hat.cross(&k_hat);
    let basis = Matrix3::from_rows(&[i_hat.transpose(), j_hat.transpose(), k_hat.transpose()]);
    let h_dot = r.cross(&a);
    let h_a = h.dot(&a);
    let hn_dot = h.dot(&h_dot) / hn;
    let rn_dot = r.dot(v) / rn;
    let w_rel = Vector3::new(0.0, -hn / (rn * rn), -rn * h_a / (hn * hn));
    let w_rel_dot = Vector3::new(
        0.0,
        -hn_dot / (rn * rn) + 2.0 * hn * rn_dot / (rn * rn * rn),
        -(rn_dot * h_a + rn * (h_dot.dot(&a) + h.dot(&jk))) / (hn * hn)
            + 2.0 * rn * h_a * hn_dot / (hn * hn * hn),
    );
    let w_frame = basis * Vector3::z();
    let omega = w_rel + w_frame;
    let omega_dot = w_rel_dot - w_rel.cross(&w_frame);
    let w = skew(&omega);
    let grav = -skew(&omega_dot) - w * w
        + tidal_tensor(mu, &(basis * r))
        + tidal_tensor(1.0 - mu, &(basis * (r - sys.earth_position())));
    let mut m = Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&grav);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&(w * -2.0));
    m
}

fn plant_at(traj: &ChiefTrajectory, t: f64) -> Result<PlantMatrix> {
    plant_matrix(&traj.state_at(t), traj.system())
}

/// LTI transition matrix `exp(A dt)`.
pub fn lti_stm(a: &PlantMatrix, dt: f64) -> Result<Matrix6<f64>> {
    if dt < 0.0 {
        return Err(Error::InvalidInput(format!("LTI step must be non-negative, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(Matrix6::identity());
    }
    expm(&(a.a * dt))
}

/// Mesh `t, t + step, ..., t_f` (last segment possibly shorter).
fn segment_mesh(t: f64, tf: f64, step: f64) -> Vec<f64> {
    let n = ((tf - t) / step).ceil().max(0.0) as usize;
    let mut mesh: Vec<f64> = (0..n).map(|k| t + k as f64 * step).collect();
    // guard against a rounding sliver right before tf
    while mesh.len() > 1 && tf - *mesh.last().unwrap() < 1e-12 * step {
        mesh.pop();
    }
    mesh.push(tf);
    mesh
}

fn segment_plant_time(eval: PlantEval, a: f64, b: f64) -> f64 {
    match eval {
        PlantEval::SegmentStart => a,
        PlantEval::Midpoint => 0.5 * (a + b),
    }
}

/// Chained LTI approximation of Φ(t, t_f).
pub fn chained_stm(
    traj: &ChiefTrajectory,
    t: f64,
    tf: f64,
    step: f64,
    eval: PlantEval,
) -> Result<Stm> {
    if t > tf {
        return Err(Error::InvalidInput(format!("chained STM needs t <= tf ({t} > {tf})")));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    if t == tf {
        return Ok(Stm::identity(t));
    }
    let mesh = segment_mesh(t, tf, step);
    let mut phi = Matrix6::identity();
    for w in mesh.windows(2) {
        let a = plant_at(traj, segment_plant_time(eval, w[0], w[1]))?;
        phi = lti_stm(&a, w[1] - w[0])? * phi;
    }
    Ok(Stm { phi, t_from: t, t_to: tf })
}

fn pack42(chief: &SVector<f64, 6>, phi: &Matrix6<f64>) -> SVector<f64, 42> {
    let mut y = SVector::<f64, 42>::zeros();
    y.fixed_rows_mut::<6>(0).copy_from(chief);
    y.as_mut_slice()[6..].copy_from_slice(phi.as_slice());
    y
}

fn unpack42(y: &SVector<f64, 42>) -> (SVector<f64, 6>, Matrix6<f64>) {
    (y.fixed_rows::<6>(0).into(), Matrix6::from_column_slice(&y.as_slice()[6..]))
}

/// Chief + variational right-hand side. `adjoint` integrates `dΨ/dt = -Ψ A`.
fn variational_rhs(
    sys: Cr3bpSystem,
    adjoint: bool,
) -> impl Fn(f64, &SVector<f64, 42>) -> SVector<f64, 42> {
    move |_t, y| {
        let r = Vector3::new(y[0], y[1], y[2]);
        let v = Vector3::new(y[3], y[4], y[5]);
        let acc = accel_raw(sys.mu, &r, &v);
        let a = plant_raw(&sys, &r, &v);
        let phi = Matrix6::from_column_slice(&y.as_slice()[6..]);
        let dphi = if adjoint { -(phi * a) } else { a * phi };
        let mut out = SVector::<f64, 42>::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&v);
        out.fixed_rows_mut::<3>(3).copy_from(&acc);
        out.as_mut_slice()[6..].copy_from_slice(dphi.as_slice());
        out
    }
}

/// Φ(t, t_f) by forward integration of `dΦ/dτ = A(τ) Φ`, `Φ(t) = I`.
pub fn integrated_stm(
    chief: &SynodicState,
    tf: f64,
    tol: f64,
    sys: &Cr3bpSystem,
) -> Result<Stm> {
    if chief.t > tf {
        return Err(Error::InvalidInput(format!("integrated STM needs t <= tf ({} > {tf})", chief.t)));
    }
    plant_matrix(chief, sys)?;
    if chief.t == tf {
        return Ok(Stm::identity(tf));
    }
    let y0 = pack42(&chief.to_vector(), &Matrix6::identity());
    let y1 = Dopri5::with_tol(tol).integrate(variational_rhs(*sys, false), chief.t, y0, tf)?;
    let (_, phi) = unpack42(&y1);
    Ok(Stm { phi, t_from: chief.t, t_to: tf })
}

/// Uniform candidate times `t0 .. tf` with `n_steps` intervals.
pub fn uniform_times(t0: f64, tf: f64, n_steps: usize) -> Vec<f64> {
    let dt = (tf - t0) / n_steps as f64;
    let mut times: Vec<f64> = (0..n_steps).map(|k| t0 + k as f64 * dt).collect();
    times.push(tf);
    times
}

/// Two-body parameters are taken from the chief at the start of the window.
fn kepler_of(traj: &ChiefTrajectory) -> Result<KeplerElements> {
    KeplerElements::from_synodic(&traj.state_at(traj.t_start()), traj.system())
}

/// Φ(t_j, t_f) for every grid time, all strategies.
fn grid_phis(traj: &ChiefTrajectory, strategy: &StmStrategy, times: &[f64]) -> Result<Vec<Matrix6<f64>>> {
    let t0 = times[0];
    let tf = *times.last().unwrap();
    match *strategy {
        StmStrategy::MatrixExponential { step, eval } => {
            // suffix products over a mesh anchored at t0
            let mesh = segment_mesh(t0, tf, step);
            let mut suffix = vec![Matrix6::identity(); mesh.len()];
            for k in (0..mesh.len() - 1).rev() {
                let a = plant_at(traj, segment_plant_time(eval, mesh[k], mesh[k + 1]))?;
                suffix[k] = suffix[k + 1] * lti_stm(&a, mesh[k + 1] - mesh[k])?;
            }
            times
                .iter()
                .map(|&t| {
                    let k = mesh.partition_point(|&m| m < t);
                    let k = k.min(mesh.len() - 1);
                    if mesh[k] == t {
                        Ok(suffix[k])
                    } else {
                        let a = plant_at(traj, segment_plant_time(eval, t, mesh[k]))?;
                        Ok(suffix[k] * lti_stm(&a, mesh[k] - t)?)
                    }
                })
                .collect()
        }
        StmStrategy::NumericalIntegration { tol } => {
            let sys = *traj.system();
            let ode = Dopri5::with_tol(tol);
            let rhs = variational_rhs(sys, true);
            let n = times.len();
            let mut out = vec![Matrix6::identity(); n];
            let mut y = pack42(&traj.final_state().to_vector(), &Matrix6::identity());
            for j in (0..n - 1).rev() {
                y = ode.integrate(&rhs, times[j + 1], y, times[j])?;
                out[j] = unpack42(&y).1;
            }
            Ok(out)
        }
        StmStrategy::Hcw => {
            let n = kepler_of(traj)?.mean_motion();
            times.iter().map(|&t| hcw_stm(n, tf - t)).collect()
        }
        StmStrategy::YamanakaAnkersen => {
            let el = kepler_of(traj)?;
            let start = traj.t_start();
            times.iter().map(|&t| ya_stm(&el, t - start, tf - start)).collect()
        }
    }
}

/// Builds Γ(t_j) on a uniform grid of `n_steps + 1` times spanning the
/// trajectory interval. The wall-clock build time is recorded.
pub fn build_control_grid(
    traj: &ChiefTrajectory,
    strategy: &StmStrategy,
    n_steps: usize,
) -> Result<ControlGrid> {
    if n_steps < 1 {
        return Err(Error::InvalidInput("grid needs at least one step".into()));
    }
    strategy.validate()?;
    let started = Instant::now();
    let times = uniform_times(traj.t_start(), traj.t_end(), n_steps);
    let phis = grid_phis(traj, strategy, &times)?;
    let gammas = phis.iter().map(gamma_of).collect();
    let phi0 = Stm { phi: phis[0], t_from: times[0], t_to: *times.last().unwrap() };
    Ok(ControlGrid {
        times,
        gammas,
        phi0,
        strategy_tag: strategy.to_string(),
        build_time: started.elapsed(),
    })
}

/// Forward transition matrices Φ(t_0, t_s) for increasing sample times.
pub fn forward_stms(
    traj: &ChiefTrajectory,
    strategy: &StmStrategy,
    sample_times: &[f64],
) -> Result<Vec<Matrix6<f64>>> {
    strategy.validate()?;
    let t0 = traj.t_start();
    if sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("sample times must be non-decreasing".into()));
    }
    if sample_times.first().is_some_and(|&t| t < t0) {
        return Err(Error::InvalidInput("sample times precede the trajectory start".into()));
    }
    match *strategy {
        StmStrategy::MatrixExponential { step, eval } => {
            let mut out = Vec::with_capacity(sample_times.len());
            let mut seg_start = t0;
            let mut acc = Matrix6::identity();
            for &ts in sample_times {
                while seg_start + step <= ts {
                    let a = plant_at(traj, segment_plant_time(eval, seg_start, seg_start + step))?;
                    acc = lti_stm(&a, step)? * acc;
                    seg_start += step;
                }
                let partial = ts - seg_start;
                if partial > 0.0 {
                    let a = plant_at(traj, segment_plant_time(eval, seg_start, seg_start + step))?;
                    out.push(lti_stm(&a, partial)? * acc);
                } else {
                    out.push(acc);
                }
            }
            Ok(out)
        }
        StmStrategy::NumericalIntegration { tol } => {
            let sys = *traj.system();
            let ode = Dopri5::with_tol(tol);
            let rhs = variational_rhs(sys, false);
            let mut y = pack42(&traj.state_at(t0).to_vector(), &Matrix6::identity());
            let mut t = t0;
            let mut out = Vec::with_capacity(sample_times.len());
            for &ts in sample_times {
                y = ode.integrate(&rhs, t, y, ts)?;
                t = ts;
                out.push(unpack42(&y).1);
            }
            Ok(out)
        }
        StmStrategy::Hcw => {
            let n = kepler_of(traj)?.mean_motion();
            sample_times.iter().map(|&t| hcw_stm(n, t - t0)).collect()
        }
        StmStrategy::YamanakaAnkersen => {
            let el = kepler_of(traj)?;
            sample_times.iter().map(|&t| ya_stm(&el, 0.0, t - t0)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cr3bp::nondimensionalize;
    use crate::relative::plant_matrix;

    fn reconfig1() -> (ChiefTrajectory, Cr3bpSystem) {
        let sys = Cr3bpSystem::earth_moon();
        let c = nondimensionalize(
            &SynodicState::new(
                Vector3::new(-13395.0, 0.0, -70841.0),
                Vector3::new(0.0, 0.1055, 0.0),
                0.0,
            ),
            &sys,
        );
        let tf = sys.hours_to_tu(66.84);
        (ChiefTrajectory::propagate(&c, tf, 1e-12, &sys).unwrap(), sys)
    }

    #[test]
    fn raw_plant_matches_checked_plant() {
        let (traj, sys) = reconfig1();
        for &t in &[0.0, 0.2, 0.5] {
            let s = traj.state_at(t);
            let a = plant_matrix(&s, &sys).unwrap().a;
            let b = plant_raw(&sys, &s.r, &s.v);
            assert!((a - b).abs().max() < 1e-15 * a.abs().max().max(1.0));
        }
    }

    #[test]
    fn zero_elapsed_time_is_identity() {
        let (traj, sys) = reconfig1();
        let a = plant_matrix(&traj.state_at(0.0), &sys).unwrap();
        assert_eq!(lti_stm(&a, 0.0).unwrap(), Matrix6::identity());
        assert_eq!(chained_stm(&traj, 0.3, 0.3, 0.01, PlantEval::SegmentStart).unwrap().phi, Matrix6::identity());
        let c = traj.state_at(0.3);
        assert_eq!(integrated_stm(&c, 0.3, 1e-12, &sys).unwrap().phi, Matrix6::identity());
    }

    #[test]
    fn chained_composition_on_segment_boundary() {
        let (traj, _) = reconfig1();
        let step = 0.01;
        let tf = traj.t_end();
        let t1 = 17.0 * step;
        let full = chained_stm(&traj, 0.0, tf, step, PlantEval::SegmentStart).unwrap();
        let head = chained_stm(&traj, 0.0, t1, step, PlantEval::SegmentStart).unwrap();
        let tail = chained_stm(&traj, t1, tf, step, PlantEval::SegmentStart).unwrap();
        let rel = (tail.phi * head.phi - full.phi).norm() / full.phi.norm();
        assert!(rel < 1e-12, "{rel}");
    }

    #[test]
    fn integrated_semigroup() {
        let (traj, sys) = reconfig1();
        let tf = traj.t_end();
        let t1 = 0.237;
        let full = integrated_stm(&traj.state_at(0.0), tf, 1e-12, &sys).unwrap();
        let head = integrated_stm(&traj.state_at(0.0), t1, 1e-12, &sys).unwrap();
        let tail = integrated_stm(&traj.state_at(t1), tf, 1e-12, &sys).unwrap();
        let rel = (tail.phi * head.phi - full.phi).norm() / full.phi.norm();
        assert!(rel < 1e-10, "{rel}");
        assert!(full.phi.determinant() > 0.0);
    }

    #[test]
    fn grid_final_map_is_b() {
        let (traj, _) = reconfig1();
        for strat in [
            StmStrategy::matrix_exponential(0.01),
            StmStrategy::numerical_integration(1e-12),
            StmStrategy::Hcw,
            StmStrategy::YamanakaAnkersen,
        ] {
            let g = build_control_grid(&traj, &strat, 20).unwrap();
            assert_eq!(g.len(), 21);
            assert_eq!(*g.gammas.last().unwrap(), ControlMatrixB::matrix());
            assert_eq!(g.tf(), traj.t_end());
        }
        let g = build_control_grid(&traj, &StmStrategy::Hcw, 1).unwrap();
        assert_eq!(g.times, vec![traj.t_start(), traj.t_end()]);
    }

    #[test]
    fn grid_matches_standalone_builders() {
        let (traj, sys) = reconfig1();
        let step = 0.013;
        let g = build_control_grid(&traj, &StmStrategy::matrix_exponential(step), 10).unwrap();
        let direct = chained_stm(&traj, 0.0, traj.t_end(), step, PlantEval::SegmentStart).unwrap();
        assert!((g.phi0.phi - direct.phi).norm() / direct.phi.norm() < 1e-13);

        let g = build_control_grid(&traj, &StmStrategy::numerical_integration(1e-12), 10).unwrap();
        for j in [0usize, 4, 9] {
            let t = g.times[j];
            let direct = integrated_stm(&traj.state_at(t), traj.t_end(), 1e-12, &sys).unwrap();
            let gam = direct.control_map().gamma;
            assert!((g.gammas[j] - gam).norm() / gam.norm() < 1e-9, "j = {j}");
        }
    }

    #[test]
    fn chained_converges_to_integrated() {
        let (traj, sys) = reconfig1();
        let tf = traj.t_end();
        let reference = integrated_stm(&traj.state_at(0.0), tf, 1e-12, &sys).unwrap().phi;
        let err = |step_s: f64| {
            let phi = chained_stm(&traj, 0.0, tf, sys.seconds_to_tu(step_s), PlantEval::SegmentStart)
                .unwrap()
                .phi;
            (phi - reference).norm()
        };
        let (coarse, fine) = (err(600.0), err(60.0));
        assert!(fine < coarse);
        let ratio = coarse / fine;
        // first-order convergence: a 10x step reduction gives ~10x less error
        assert!((5.0..=15.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn cache_roundtrip() {
        let (traj, _) = reconfig1();
        let g = build_control_grid(&traj, &StmStrategy::matrix_exponential(0.02), 5).unwrap();
        let mut buf = Vec::new();
        g.write_cache(&mut buf).unwrap();
        let back = ControlGrid::read_cache(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.times, g.times);
        assert_eq!(back.gammas, g.gammas);
        assert_eq!(back.phi0.phi, g.phi0.phi);
        assert_eq!(back.strategy_tag, g.strategy_tag);
    }

    #[test]
    fn invalid_strategies_rejected() {
        let (traj, _) = reconfig1();
        assert!(build_control_grid(&traj, &StmStrategy::matrix_exponential(0.0), 10).is_err());
        assert!(build_control_grid(&traj, &StmStrategy::numerical_integration(-1.0), 10).is_err());
        assert!(build_control_grid(&traj, &StmStrategy::Hcw, 0).is_err());
    }
}
