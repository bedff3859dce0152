//! Earth–Moon CR3BP in the Moon-centered synodic frame.
//!
//! The synodic x axis points from the Moon to the Earth, z is along the
//! system angular momentum. Internally every quantity is nondimensional:
//! distances in DU (Earth–Moon distance), times in TU (inverse mean motion).

use std::path::Path;

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ode::{DenseSolution, Dopri5};

/// Closest approach to either primary before the dynamics are rejected.
pub const SINGULARITY_DU: f64 = 1e-9;

const SECONDS_PER_HOUR: f64 = 3600.0;

/// Default constants bundled with the crate.
pub const EARTH_MOON_CONSTANTS: &str = include_str!("../data/earth_moon.toml");

/// Mass parameter and unit scales of a CR3BP system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cr3bpSystem {
    pub mu: f64,
    /// Distance unit in km.
    pub du: f64,
    /// Time unit in s.
    pub tu: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantsFile {
    #[allow(dead_code)]
    version: Option<String>,
    #[allow(dead_code)]
    source: Option<String>,
    mu: f64,
    du_km: f64,
    tu_s: f64,
}

impl Cr3bpSystem {
    pub fn new(mu: f64, du: f64, tu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 0.5) {
            return Err(Error::InvalidInput(format!("mass parameter {mu} outside (0, 0.5)")));
        }
        if !(du > 0.0 && du.is_finite() && tu > 0.0 && tu.is_finite()) {
            return Err(Error::InvalidInput(format!("non-positive units du={du} tu={tu}")));
        }
        Ok(Self { mu, du, tu })
    }

    /// Earth–Moon system from the bundled constants file.
    pub fn earth_moon() -> Self {
        Self::from_constants_str(EARTH_MOON_CONSTANTS).expect("bundled constants are valid")
    }

    pub fn from_constants_str(text: &str) -> Result<Self> {
        let c: ConstantsFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("constants: {e}")))?;
        Self::new(c.mu, c.du_km, c.tu_s)
    }

    pub fn from_constants_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_constants_str(&text)
    }

    /// Velocity unit in km/s.
    pub fn vu(&self) -> f64 {
        self.du / self.tu
    }

    pub fn hours_to_tu(&self, hours: f64) -> f64 {
        hours * SECONDS_PER_HOUR / self.tu
    }

    pub fn tu_to_hours(&self, tu: f64) -> f64 {
        tu * self.tu / SECONDS_PER_HOUR
    }

    pub fn seconds_to_tu(&self, s: f64) -> f64 {
        s / self.tu
    }

    /// Earth position relative to the Moon in the synodic frame.
    pub fn earth_position(&self) -> Vector3<f64> {
        Vector3::new(1.0, 0.0, 0.0)
    }

    /// Barycenter position relative to the Moon.
    pub fn barycenter(&self) -> Vector3<f64> {
        Vector3::new(1.0 - self.mu, 0.0, 0.0)
    }

    /// Gravitational parameter of the Moon (nondimensional).
    pub fn gm_moon(&self) -> f64 {
        self.mu
    }
}

/// Absolute state in the Moon-centered synodic frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynodicState {
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
    pub t: f64,
}

impl SynodicState {
    pub fn new(r: Vector3<f64>, v: Vector3<f64>, t: f64) -> Self {
        Self { r, v, t }
    }

    pub fn from_vector(x: &Vector6<f64>, t: f64) -> Self {
        Self {
            r: x.fixed_rows::<3>(0).into(),
            v: x.fixed_rows::<3>(3).into(),
            t,
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.r);
        x.fixed_rows_mut::<3>(3).copy_from(&self.v);
        x
    }

    /// Reflection across the synodic x–z plane.
    pub fn mirrored(&self) -> Self {
        Self {
            r: Vector3::new(self.r.x, -self.r.y, self.r.z),
            v: Vector3::new(-self.v.x, self.v.y, -self.v.z),
            t: -self.t,
        }
    }
}

/// Scales a km / km/s / hours state to DU / DU/TU / TU.
pub fn nondimensionalize(state_km: &SynodicState, sys: &Cr3bpSystem) -> SynodicState {
    SynodicState {
        r: state_km.r / sys.du,
        v: state_km.v * (sys.tu / sys.du),
        t: sys.hours_to_tu(state_km.t),
    }
}

/// Inverse of [`nondimensionalize`].
pub fn dimensionalize(state: &SynodicState, sys: &Cr3bpSystem) -> SynodicState {
    SynodicState {
        r: state.r * sys.du,
        v: state.v * (sys.du / sys.tu),
        t: sys.tu_to_hours(state.t),
    }
}

fn check_singularity(r: &Vector3<f64>) -> Result<()> {
    let dm = r.norm();
    if !(dm >= SINGULARITY_DU) {
        return Err(Error::Singularity { body: "Moon", distance: dm });
    }
    let de = (r - Vector3::new(1.0, 0.0, 0.0)).norm();
    if !(de >= SINGULARITY_DU) {
        return Err(Error::Singularity { body: "Earth", distance: de });
    }
    Ok(())
}

/// Rotating-frame acceleration without the singularity check.
pub(crate) fn accel_raw(mu: f64, r: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    let rn = r.norm();
    let d = Vector3::new(r.x - 1.0, r.y, r.z);
    let dn = d.norm();
    let gm = mu / (rn * rn * rn);
    let ge = (1.0 - mu) / (dn * dn * dn);
    Vector3::new(
        2.0 * v.y + (r.x - (1.0 - mu)) - gm * r.x - ge * d.x,
        -2.0 * v.x + r.y - gm * r.y - ge * d.y,
        -gm * r.z - ge * d.z,
    )
}

/// Total acceleration (gravity, centrifugal, Coriolis) in the synodic frame.
pub fn cr3bp_accel(state: &SynodicState, sys: &Cr3bpSystem) -> Result<Vector3<f64>> {
    check_singularity(&state.r)?;
    Ok(accel_raw(sys.mu, &state.r, &state.v))
}

/// Tidal tensor `-GM/d^3 (I - 3 d d^T / d^2)` of a point mass seen from offset `d`.
pub fn tidal_tensor(gm: f64, d: &Vector3<f64>) -> Matrix3<f64> {
    let dn = d.norm();
    let u = d / dn;
    (Matrix3::identity() - u * u.transpose() * 3.0) * (-gm / (dn * dn * dn))
}

/// Combined gravity gradient of both primaries at `r` (synodic frame).
pub fn gravity_gradient(mu: f64, r: &Vector3<f64>) -> Matrix3<f64> {
    tidal_tensor(mu, r) + tidal_tensor(1.0 - mu, &(r - Vector3::new(1.0, 0.0, 0.0)))
}

/// Time derivative of the acceleration along the flow.
pub(crate) fn jerk_raw(
    mu: f64,
    r: &Vector3<f64>,
    v: &Vector3<f64>,
    a: &Vector3<f64>,
) -> Vector3<f64> {
    let mut dadr = gravity_gradient(mu, r);
    dadr[(0, 0)] += 1.0;
    dadr[(1, 1)] += 1.0;
    dadr * v + Vector3::new(2.0 * a.y, -2.0 * a.x, 0.0)
}

/// Jacobi constant `2U - |v|^2`.
pub fn jacobi_constant(state: &SynodicState, sys: &Cr3bpSystem) -> f64 {
    let mu = sys.mu;
    let r = &state.r;
    let rn = r.norm();
    let dn = (r - Vector3::new(1.0, 0.0, 0.0)).norm();
    let xb = r.x - (1.0 - mu);
    xb * xb + r.y * r.y + 2.0 * mu / rn + 2.0 * (1.0 - mu) / dn - state.v.norm_squared()
}

pub(crate) fn cr3bp_rhs(mu: f64) -> impl Fn(f64, &Vector6<f64>) -> Vector6<f64> + Copy {
    move |_t, x| {
        let r: Vector3<f64> = x.fixed_rows::<3>(0).into();
        let v: Vector3<f64> = x.fixed_rows::<3>(3).into();
        let a = accel_raw(mu, &r, &v);
        Vector6::new(v.x, v.y, v.z, a.x, a.y, a.z)
    }
}

/// Propagates the nonlinear CR3BP from `state.t` to `t1` (either direction).
pub fn propagate_absolute(
    state: &SynodicState,
    t1: f64,
    tol: f64,
    sys: &Cr3bpSystem,
) -> Result<SynodicState> {
    check_singularity(&state.r)?;
    let x1 = Dopri5::with_tol(tol).integrate(cr3bp_rhs(sys.mu), state.t, state.to_vector(), t1)?;
    let out = SynodicState::from_vector(&x1, t1);
    check_singularity(&out.r)?;
    Ok(out)
}

/// Chief trajectory with dense output over an interval.
#[derive(Debug, Clone)]
pub struct ChiefTrajectory {
    sys: Cr3bpSystem,
    sol: DenseSolution<6>,
    start: SynodicState,
}

impl ChiefTrajectory {
    pub fn propagate(
        start: &SynodicState,
        t1: f64,
        tol: f64,
        sys: &Cr3bpSystem,
    ) -> Result<Self> {
        check_singularity(&start.r)?;
        let sol = Dopri5::with_tol(tol).integrate_dense(
            cr3bp_rhs(sys.mu),
            start.t,
            start.to_vector(),
            t1,
        )?;
        Ok(Self { sys: *sys, sol, start: *start })
    }

    pub fn system(&self) -> &Cr3bpSystem {
        &self.sys
    }

    pub fn t_start(&self) -> f64 {
        self.sol.t_start()
    }

    pub fn t_end(&self) -> f64 {
        self.sol.t_end()
    }

    pub fn state_at(&self, t: f64) -> SynodicState {
        if t == self.start.t {
            return self.start;
        }
        SynodicState::from_vector(&self.sol.eval(t), t)
    }

    pub fn final_state(&self) -> SynodicState {
        SynodicState::from_vector(&self.sol.final_state(), self.sol.t_end())
    }
}

/// LVLH frame attached to the chief.
///
/// Rows of `basis` are the LVLH unit vectors in synodic coordinates:
/// `k` points from the chief to the Moon, `j` is anti-parallel to the
/// chief's angular momentum about the Moon (synodic-relative velocity),
/// `i` completes the triad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LvlhFrame {
    pub basis: Matrix3<f64>,
    /// Angular velocity of LVLH relative to inertial, in LVLH axes.
    pub omega: Vector3<f64>,
    /// Inertial (equivalently LVLH-relative) derivative of `omega`, in LVLH axes.
    pub omega_dot: Vector3<f64>,
    /// Angular velocity of LVLH relative to the synodic frame, in LVLH axes.
    pub omega_rel: Vector3<f64>,
}

impl LvlhFrame {
    pub fn to_lvlh(&self, v_syn: &Vector3<f64>) -> Vector3<f64> {
        self.basis * v_syn
    }

    pub fn to_synodic(&self, v_lvlh: &Vector3<f64>) -> Vector3<f64> {
        self.basis.transpose() * v_lvlh
    }
}

/// Builds the LVLH frame and its kinematics for a chief state.
pub fn lvlh_frame(state: &SynodicState, sys: &Cr3bpSystem) -> Result<LvlhFrame> {
    check_singularity(&state.r)?;
    let r = state.r;
    let v = state.v;
    let a = accel_raw(sys.mu, &r, &v);
    let jk = jerk_raw(sys.mu, &r, &v, &a);

    let h = r.cross(&v);
    let hn = h.norm();
    if !(hn >= 1e-12) {
        return Err(Error::DegenerateFrame(hn));
    }
    let rn = r.norm();
    let k_hat = -r / rn;
    let j_hat = -h / hn;
    let i_hat = j_hat.cross(&k_hat);
    let basis = Matrix3::from_rows(&[i_hat.transpose(), j_hat.transpose(), k_hat.transpose()]);

    let h_dot = r.cross(&a);
    let h_a = h.dot(&a);
    let hn_dot = h.dot(&h_dot) / hn;
    let rn_dot = r.dot(&v) / rn;

    let w_y = -hn / (rn * rn);
    let w_z = -rn * h_a / (hn * hn);
    let w_y_dot = -hn_dot / (rn * rn) + 2.0 * hn * rn_dot / (rn * rn * rn);
    let w_z_dot = -(rn_dot * h_a + rn * (h_dot.dot(&a) + h.dot(&jk))) / (hn * hn)
        + 2.0 * rn * h_a * hn_dot / (hn * hn * hn);

    let omega_rel = Vector3::new(0.0, w_y, w_z);
    let omega_rel_dot = Vector3::new(0.0, w_y_dot, w_z_dot);
    // synodic frame spins at unit rate about its z axis
    let omega_frame = basis * Vector3::z();
    Ok(LvlhFrame {
        basis,
        omega: omega_rel + omega_frame,
        omega_dot: omega_rel_dot - omega_rel.cross(&omega_frame),
        omega_rel,
    })
}

/// Maps LVLH components to RTN: `R = -k`, `T = i`, `N = -j`.
pub fn rtn_from_lvlh(v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(-v.z, v.x, -v.y)
}

/// Inverse of [`rtn_from_lvlh`].
pub fn lvlh_from_rtn(v: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(v.y, -v.z, -v.x)
}

/// Skew-symmetric cross-product matrix.
pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys() -> Cr3bpSystem {
        Cr3bpSystem::earth_moon()
    }

    fn reconfig1_km() -> SynodicState {
        SynodicState::new(
            Vector3::new(-13395.0, 0.0, -70841.0),
            Vector3::new(0.0, 0.1055, 0.0),
            0.0,
        )
    }

    /// Effective potential `U` whose gradient is the non-Coriolis acceleration.
    fn potential(mu: f64, r: &Vector3<f64>) -> f64 {
        let xb = r.x - (1.0 - mu);
        0.5 * (xb * xb + r.y * r.y)
            + mu / r.norm()
            + (1.0 - mu) / (r - Vector3::new(1.0, 0.0, 0.0)).norm()
    }

    #[test]
    fn constants_match_gravitational_parameters() {
        let s = sys();
        let (gm_e, gm_m) = (398600.435436, 4902.800066);
        assert!((s.mu - gm_m / (gm_e + gm_m)).abs() < 1e-10);
        let tu = (s.du.powi(3) / (gm_e + gm_m)).sqrt();
        assert!((s.tu - tu).abs() / tu < 1e-5);
    }

    #[test]
    fn collinear_point_is_equilibrium() {
        let s = sys();
        // L2 lies beyond the Moon on the -x side; locate it by bisection on a_x
        let ax = |x: f64| accel_raw(s.mu, &Vector3::new(x, 0.0, 0.0), &Vector3::zeros()).x;
        let (mut lo, mut hi) = (-0.5, -0.05);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ax(lo).signum() == ax(mid).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let st = SynodicState::new(Vector3::new(0.5 * (lo + hi), 0.0, 0.0), Vector3::zeros(), 0.0);
        assert!(cr3bp_accel(&st, &s).unwrap().norm() < 1e-12);
    }

    #[test]
    fn acceleration_matches_potential_gradient() {
        let s = sys();
        let st = nondimensionalize(&reconfig1_km(), &s);
        let a = cr3bp_accel(&st, &s).unwrap();
        let h = 1e-4;
        let mut grad = Vector3::zeros();
        for i in 0..3 {
            let at = |k: f64| {
                let mut r = st.r;
                r[i] += k * h;
                potential(s.mu, &r)
            };
            // fourth-order central stencil
            grad[i] = (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h);
        }
        let coriolis = Vector3::new(2.0 * st.v.y, -2.0 * st.v.x, 0.0);
        let diff = (a - (grad + coriolis)).norm();
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn acceleration_mirror_symmetry() {
        let s = sys();
        let st = SynodicState::new(Vector3::new(-0.03, 0.07, -0.1), Vector3::new(0.02, 0.1, 0.05), 0.0);
        let a = cr3bp_accel(&st, &s).unwrap();
        let am = cr3bp_accel(&st.mirrored(), &s).unwrap();
        assert!((am - Vector3::new(a.x, -a.y, a.z)).norm() < 1e-15);
    }

    #[test]
    fn singular_states_are_rejected() {
        let s = sys();
        let at_moon = SynodicState::new(Vector3::zeros(), Vector3::zeros(), 0.0);
        assert!(matches!(cr3bp_accel(&at_moon, &s), Err(Error::Singularity { body: "Moon", .. })));
        let at_earth = SynodicState::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros(), 0.0);
        assert!(matches!(cr3bp_accel(&at_earth, &s), Err(Error::Singularity { body: "Earth", .. })));
    }

    #[test]
    fn zero_propagation_is_identity_and_reversible() {
        let s = sys();
        let st = nondimensionalize(&reconfig1_km(), &s);
        assert_eq!(propagate_absolute(&st, st.t, 1e-12, &s).unwrap(), st);
        let fwd = propagate_absolute(&st, 1.0, 1e-13, &s).unwrap();
        let back = propagate_absolute(&fwd, 0.0, 1e-13, &s).unwrap();
        assert!((back.r - st.r).norm() < 1e-9);
        assert!((back.v - st.v).norm() < 1e-9);
    }

    #[test]
    fn jacobi_constant_is_conserved() {
        let s = sys();
        let st = nondimensionalize(&reconfig1_km(), &s);
        let c0 = jacobi_constant(&st, &s);
        let end = propagate_absolute(&st, 4.0 * std::f64::consts::PI, 1e-12, &s).unwrap();
        assert!((jacobi_constant(&end, &s) - c0).abs() < 1e-10);
    }

    #[test]
    fn lvlh_axis_conventions() {
        let s = sys();
        let st = SynodicState::new(Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.0, 0.3, 0.1), 0.0);
        let f = lvlh_frame(&st, &s).unwrap();
        let k: Vector3<f64> = f.basis.row(2).transpose();
        assert!((k - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-15);
        let btb = f.basis.transpose() * f.basis;
        assert!((btb - Matrix3::identity()).norm() < 1e-12);
        assert!((f.basis.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_frame_is_reported() {
        let s = sys();
        let st = SynodicState::new(Vector3::new(0.1, 0.0, 0.0), Vector3::new(0.2, 0.0, 0.0), 0.0);
        assert!(matches!(lvlh_frame(&st, &s), Err(Error::DegenerateFrame(_))));
    }

    #[test]
    fn rtn_permutation() {
        assert_eq!(rtn_from_lvlh(&Vector3::new(1.0, 0.0, 0.0)), Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(rtn_from_lvlh(&Vector3::new(0.0, 0.0, 1.0)), Vector3::new(-1.0, 0.0, 0.0));
        let v = Vector3::new(0.3, -2.0, 7.5);
        assert_eq!(lvlh_from_rtn(&rtn_from_lvlh(&v)), v);
        assert_eq!(rtn_from_lvlh(&v).norm(), v.norm());
    }

    #[test]
    fn unit_conversions() {
        let s = sys();
        let st = SynodicState::new(Vector3::new(s.du, 0.0, 0.0), Vector3::new(s.du / s.tu, 0.0, 0.0), 0.0);
        let nd = nondimensionalize(&st, &s);
        assert_eq!(nd.r, Vector3::new(1.0, 0.0, 0.0));
        assert!((nd.v.x - 1.0).abs() < 1e-15);
        let r2 = SynodicState::new(
            Vector3::new(-4909.0, 29088.0, -14638.0),
            Vector3::new(0.1080, -0.1647, 0.4331),
            12.5,
        );
        let back = dimensionalize(&nondimensionalize(&r2, &s), &s);
        for i in 0..3 {
            assert!((back.r[i] - r2.r[i]).abs() <= 1e-15 * r2.r[i].abs());
            assert!((back.v[i] - r2.v[i]).abs() <= 1e-15 * r2.v[i].abs());
        }
        assert!((back.t - r2.t).abs() <= 1e-15 * r2.t);
    }

    #[test]
    fn constants_file_rejects_unknown_keys() {
        let err = Cr3bpSystem::from_constants_str("mu = 0.01\ndu_km = 1.0\ntu_s = 1.0\nfoo = 2\n");
        assert!(matches!(err, Err(Error::Config(msg)) if msg.contains("foo")));
    }
}
