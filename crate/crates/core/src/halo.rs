//! Symmetric halo orbits by single shooting.
//!
//! Orbits are parameterized by their x–z plane crossing at apolune,
//! `(x0, 0, z0, 0, vy0, 0)`. Symmetry about that plane means a half period
//! ends on another perpendicular crossing, so the shooting constraints are
//! `y = vx = vz = 0` at `T/2`.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Matrix6, SVector, Vector3, Vector4, Vector6};

use crate::cr3bp::{accel_raw, gravity_gradient, Cr3bpSystem, SynodicState};
use crate::error::{Error, Result};
use crate::ode::Dopri5;

/// Mean synodic month in days, the clock the resonant families are named by.
pub const SYNODIC_MONTH_DAYS: f64 = 29.530589;

const NEWTON_TOL: f64 = 1e-11;
const NEWTON_MAX: usize = 30;

/// Resonance label `revs:months`: `revs` orbits per `months` synodic months.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resonance {
    pub revs: u32,
    pub months: u32,
}

impl Resonance {
    pub const fn new(revs: u32, months: u32) -> Self {
        Self { revs, months }
    }

    /// Orbit period in TU.
    pub fn period(&self, sys: &Cr3bpSystem) -> f64 {
        let days = SYNODIC_MONTH_DAYS * self.months as f64 / self.revs as f64;
        sys.seconds_to_tu(days * 86_400.0)
    }

    pub fn label(&self) -> String {
        format!("{}:{}", self.revs, self.months)
    }
}

/// The six southern L2 families sampled by the Monte Carlo campaign, in
/// order of increasing period.
pub const CATALOG_FAMILIES: [Resonance; 6] = [
    Resonance::new(9, 2),
    Resonance::new(4, 1),
    Resonance::new(7, 2),
    Resonance::new(3, 1),
    Resonance::new(5, 2),
    Resonance::new(2, 1),
];

/// A converged periodic orbit, nondimensional, starting at apolune.
#[derive(Debug, Clone, PartialEq)]
pub struct HaloOrbit {
    pub x0: f64,
    pub z0: f64,
    pub vy0: f64,
    pub period: f64,
}

impl HaloOrbit {
    pub fn initial_state(&self) -> SynodicState {
        SynodicState::new(Vector3::new(self.x0, 0.0, self.z0), Vector3::new(0.0, self.vy0, 0.0), 0.0)
    }

    /// `n` states at uniformly spaced phases `k T / n`, k = 0..n.
    pub fn sample(&self, n: usize, sys: &Cr3bpSystem, tol: f64) -> Result<Vec<SynodicState>> {
        let x0 = self.initial_state().to_vector();
        let rhs = crate::cr3bp::cr3bp_rhs(sys.mu);
        let sol = Dopri5::with_tol(tol).integrate_dense(rhs, 0.0, x0, self.period)?;
        Ok((0..n)
            .map(|k| {
                let t = self.period * k as f64 / n as f64;
                let x = if k == 0 { x0 } else { sol.eval(t) };
                SynodicState::from_vector(&x, t)
            })
            .collect())
    }
}

fn variational_rhs(mu: f64) -> impl Fn(f64, &SVector<f64, 42>) -> SVector<f64, 42> {
    move |_t, y| {
        let r = Vector3::new(y[0], y[1], y[2]);
        let v = Vector3::new(y[3], y[4], y[5]);
        let a = accel_raw(mu, &r, &v);
        let mut g = gravity_gradient(mu, &r);
        g[(0, 0)] += 1.0;
        g[(1, 1)] += 1.0;
        let mut jac = Matrix6::zeros();
        jac.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        jac.fixed_view_mut::<3, 3>(3, 0).copy_from(&g);
        jac[(3, 4)] = 2.0;
        jac[(4, 3)] = -2.0;
        let phi = Matrix6::from_column_slice(&y.as_slice()[6..]);
        let dphi = jac * phi;
        let mut out = SVector::<f64, 42>::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&v);
        out.fixed_rows_mut::<3>(3).copy_from(&a);
        out.fixed_rows_mut::<36>(6).copy_from_slice(dphi.as_slice());
        out
    }
}

/// Flow and its state transition matrix from `x0` over `t`.
pub fn flow_with_stm(mu: f64, x0: &Vector6<f64>, t: f64, tol: f64) -> Result<(Vector6<f64>, Matrix6<f64>)> {
    let mut y0 = SVector::<f64, 42>::zeros();
    y0.fixed_rows_mut::<6>(0).copy_from(x0);
    y0.fixed_rows_mut::<36>(6).copy_from_slice(Matrix6::<f64>::identity().as_slice());
    let y = Dopri5::with_tol(tol).integrate(variational_rhs(mu), 0.0, y0, t)?;
    Ok((y.fixed_rows::<6>(0).into(), Matrix6::from_column_slice(&y.as_slice()[6..])))
}

fn crossing_residual(xf: &Vector6<f64>) -> Vector3<f64> {
    Vector3::new(xf[1], xf[3], xf[5])
}

fn newton3(
    mut u: Vector3<f64>,
    mut eval: impl FnMut(&Vector3<f64>) -> Result<(Vector3<f64>, Matrix3<f64>)>,
) -> Result<Vector3<f64>> {
    for _ in 0..NEWTON_MAX {
        let (f, j) = eval(&u)?;
        if f.norm() < NEWTON_TOL {
            return Ok(u);
        }
        let du = j.lu().solve(&(-f)).ok_or_else(|| Error::Shooting("singular shooting Jacobian".into()))?;
        // keep steps local so the iteration stays on the family
        let scale = (0.05 / du.norm()).min(1.0);
        u += du * scale;
    }
    Err(Error::Shooting(format!("no convergence in {NEWTON_MAX} Newton steps")))
}

/// Halo orbit of prescribed period near the guess `(x0, z0, vy0)`.
pub fn correct_fixed_period(mu: f64, guess: &HaloOrbit, period: f64, tol: f64) -> Result<HaloOrbit> {
    let u = newton3(Vector3::new(guess.x0, guess.z0, guess.vy0), |u| {
        let x0 = Vector6::new(u[0], 0.0, u[1], 0.0, u[2], 0.0);
        let (xf, phi) = flow_with_stm(mu, &x0, 0.5 * period, tol)?;
        let rows = [1, 3, 5];
        let cols = [0, 2, 4];
        let j = Matrix3::from_fn(|i, k| phi[(rows[i], cols[k])]);
        Ok((crossing_residual(&xf), j))
    })?;
    Ok(HaloOrbit { x0: u[0], z0: u[1], vy0: u[2], period })
}

/// Halo orbit through the apolune height `z0`, solving for `x0`, `vy0`
/// and the period.
pub fn correct_fixed_z(mu: f64, guess: &HaloOrbit, tol: f64) -> Result<HaloOrbit> {
    let z0 = guess.z0;
    let u = newton3(Vector3::new(guess.x0, guess.vy0, 0.5 * guess.period), |u| {
        let x0 = Vector6::new(u[0], 0.0, z0, 0.0, u[1], 0.0);
        let (xf, phi) = flow_with_stm(mu, &x0, u[2], tol)?;
        let r = Vector3::new(xf[0], xf[1], xf[2]);
        let v = Vector3::new(xf[3], xf[4], xf[5]);
        let a = accel_raw(mu, &r, &v);
        let dxf = Vector6::new(v.x, v.y, v.z, a.x, a.y, a.z);
        let rows = [1, 3, 5];
        let j = Matrix3::from_fn(|i, k| match k {
            0 => phi[(rows[i], 0)],
            1 => phi[(rows[i], 4)],
            _ => dxf[rows[i]],
        });
        Ok((crossing_residual(&xf), j))
    })?;
    Ok(HaloOrbit { x0: u[0], z0, vy0: u[1], period: 2.0 * u[2] })
}

/// Shooting residual `(y, vx, vz)` at `T/2` and its Jacobian with respect
/// to `(x0, z0, vy0, T/2)`.
fn shooting(mu: f64, u: &Vector4<f64>, tol: f64) -> Result<(Vector3<f64>, Matrix3x4<f64>)> {
    let x0 = Vector6::new(u[0], 0.0, u[1], 0.0, u[2], 0.0);
    let (xf, phi) = flow_with_stm(mu, &x0, u[3], tol)?;
    let r = Vector3::new(xf[0], xf[1], xf[2]);
    let v = Vector3::new(xf[3], xf[4], xf[5]);
    let a = accel_raw(mu, &r, &v);
    let dxf = Vector6::new(v.x, v.y, v.z, a.x, a.y, a.z);
    let rows = [1, 3, 5];
    let j = Matrix3x4::from_fn(|i, k| match k {
        0 => phi[(rows[i], 0)],
        1 => phi[(rows[i], 2)],
        2 => phi[(rows[i], 4)],
        _ => dxf[rows[i]],
    });
    Ok((crossing_residual(&xf), j))
}

fn pack(o: &HaloOrbit) -> Vector4<f64> {
    Vector4::new(o.x0, o.z0, o.vy0, 0.5 * o.period)
}

fn unpack(u: &Vector4<f64>) -> HaloOrbit {
    HaloOrbit { x0: u[0], z0: u[1], vy0: u[2], period: 2.0 * u[3] }
}

/// Unit tangent to the family at `u`, the null direction of the shooting
/// Jacobian, oriented to increase the period.
fn tangent(mu: f64, u: &Vector4<f64>, tol: f64) -> Result<Vector4<f64>> {
    let (_, j) = shooting(mu, u, tol)?;
    let m = Matrix4::from_fn(|i, k| if i < 3 { j[(i, k)] } else { 0.0 });
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let imin = svd.singular_values.imin();
    let t: Vector4<f64> = vt.row(imin).transpose();
    Ok(if t[3] < 0.0 { -t } else { t })
}

/// Newton solve of the shooting equations plus the pseudo-arclength
/// condition `(u - u_ref)·t = ds`.
fn arclength_correct(
    mu: f64,
    u_ref: &Vector4<f64>,
    t: &Vector4<f64>,
    ds: f64,
    tol: f64,
) -> Result<(Vector4<f64>, usize)> {
    let mut u = u_ref + t * ds;
    for iter in 0..NEWTON_MAX {
        let (f, j) = shooting(mu, &u, tol)?;
        let g = (u - u_ref).dot(t) - ds;
        if f.norm() < NEWTON_TOL && g.abs() < NEWTON_TOL {
            return Ok((u, iter));
        }
        let m = Matrix4::from_fn(|i, k| if i < 3 { j[(i, k)] } else { t[k] });
        let rhs = -Vector4::new(f[0], f[1], f[2], g);
        let du = m.lu().solve(&rhs).ok_or_else(|| Error::Shooting("singular arclength Jacobian".into()))?;
        let scale = (0.05 / du.norm()).min(1.0);
        u += du * scale;
    }
    Err(Error::Shooting(format!("no convergence in {NEWTON_MAX} Newton steps")))
}

/// Pseudo-arclength continuation from `seed` to each target period in
/// turn, returning the family member found at each.
pub fn continue_to_periods(
    mu: f64,
    seed: &HaloOrbit,
    targets: &[f64],
    ds_max: f64,
    tol: f64,
) -> Result<Vec<HaloOrbit>> {
    let mut out = Vec::with_capacity(targets.len());
    let mut u = pack(seed);
    let mut t = tangent(mu, &u, tol)?;
    let mut ds = 0.25 * ds_max;
    let mut steps = 0;
    for &target in targets {
        let target_tau = 0.5 * target;
        if (u[3] - target_tau).abs() <= 1e-13 * target_tau {
            out.push(unpack(&u));
            continue;
        }
        let dir = (target_tau - u[3]).signum();
        if t[3] * dir < 0.0 {
            t = -t;
        }
        loop {
            steps += 1;
            if steps > 20_000 || ds < 1e-9 {
                return Err(Error::Shooting("continuation stalled".into()));
            }
            let Ok((un, iters)) = arclength_correct(mu, &u, &t, ds, tol) else {
                ds *= 0.5;
                continue;
            };
            if (un[3] - target_tau) * dir >= 0.0 {
                let found = locate_period(mu, &u, &t, ds, target_tau, tol)?;
                u = pack(&found);
                let tn = tangent(mu, &u, tol)?;
                t = if tn.dot(&t) < 0.0 { -tn } else { tn };
                out.push(found);
                break;
            }
            let tn = tangent(mu, &un, tol)?;
            t = if tn.dot(&t) < 0.0 { -tn } else { tn };
            u = un;
            if iters <= 4 {
                ds = (ds * 1.5).min(ds_max);
            }
        }
    }
    Ok(out)
}

/// Member with half period `target_tau` on the arc from `u` of length at
/// most `ds_hi` along `t`, found by secant iteration on the arclength.
fn locate_period(
    mu: f64,
    u: &Vector4<f64>,
    t: &Vector4<f64>,
    ds_hi: f64,
    target_tau: f64,
    tol: f64,
) -> Result<HaloOrbit> {
    let (mut a, mut fa) = (0.0, u[3] - target_tau);
    let (ub, _) = arclength_correct(mu, u, t, ds_hi, tol)?;
    let (mut b, mut fb) = (ds_hi, ub[3] - target_tau);
    for _ in 0..100 {
        let w = (fa / (fa - fb)).clamp(0.02, 0.98);
        let c = a + w * (b - a);
        let (uc, _) = arclength_correct(mu, u, t, c, tol)?;
        let fc = uc[3] - target_tau;
        if fc.abs() <= 1e-13 * target_tau {
            return Ok(unpack(&uc));
        }
        if fc * fa > 0.0 {
            (a, fa) = (c, fc);
        } else {
            (b, fb) = (c, fc);
        }
    }
    Err(Error::Shooting(format!("could not isolate period {}", 2.0 * target_tau)))
}

/// Apolune of the reference 9:2 near-rectilinear orbit (km, km/s): the
/// starting guess for the catalog continuation.
pub const NRHO_APOLUNE_KM: ([f64; 3], [f64; 3]) = ([-13395.0, 0.0, -70841.0], [0.0, 0.1055, 0.0]);

/// One orbit per resonance, in the order given, continued from the family
/// member through the reference apolune height.
pub fn resonant_family(sys: &Cr3bpSystem, resonances: &[Resonance], tol: f64) -> Result<Vec<HaloOrbit>> {
    let (r, v) = NRHO_APOLUNE_KM;
    let guess = HaloOrbit {
        x0: r[0] / sys.du,
        z0: r[2] / sys.du,
        vy0: v[1] / sys.vu(),
        period: Resonance::new(9, 2).period(sys),
    };
    let seed = correct_fixed_z(sys.mu, &guess, tol)?;
    let targets: Vec<f64> = resonances.iter().map(|r| r.period(sys)).collect();
    continue_to_periods(sys.mu, &seed, &targets, 0.01, tol)
}
