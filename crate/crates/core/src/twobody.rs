//! Two-body relative-motion baselines: Hill–Clohessy–Wiltshire and
//! Yamanaka–Ankersen, both returned in the LVLH axis convention used by the
//! CR3BP plant (x along-track, y against the orbit normal, z toward the
//! attracting body).

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4, Matrix6, Vector3};

use crate::cr3bp::{lvlh_from_rtn, Cr3bpSystem, SynodicState};
use crate::error::{Error, Result};

const KEPLER_TOL: f64 = 1e-12;

/// Osculating Keplerian elements needed by the baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeplerElements {
    pub gm: f64,
    pub a: f64,
    pub e: f64,
    /// True anomaly at the element epoch.
    pub nu0: f64,
}

impl KeplerElements {
    /// Elements from an inertial position/velocity about a body of parameter `gm`.
    pub fn from_inertial(r: &Vector3<f64>, v: &Vector3<f64>, gm: f64) -> Result<Self> {
        let rn = r.norm();
        let h = r.cross(v);
        let e_vec = v.cross(&h) / gm - r / rn;
        let e = e_vec.norm();
        let energy = 0.5 * v.norm_squared() - gm / rn;
        if !(energy < 0.0) || e >= 1.0 {
            return Err(Error::InvalidInput(format!(
                "osculating orbit is not elliptic (e = {e:.6})"
            )));
        }
        let a = -gm / (2.0 * energy);
        let nu0 = if e < 1e-14 {
            0.0
        } else {
            let cos_nu = (e_vec.dot(r) / (e * rn)).clamp(-1.0, 1.0);
            let nu = cos_nu.acos();
            if r.dot(v) < 0.0 {
                2.0 * PI - nu
            } else {
                nu
            }
        };
        Ok(Self { gm, a, e, nu0 })
    }

    /// Moon-centered osculating elements of a chief given in the synodic frame.
    pub fn from_synodic(chief: &SynodicState, sys: &Cr3bpSystem) -> Result<Self> {
        let v_inertial = chief.v + Vector3::z().cross(&chief.r);
        Self::from_inertial(&chief.r, &v_inertial, sys.gm_moon())
    }

    pub fn circular(gm: f64, a: f64) -> Self {
        Self { gm, a, e: 0.0, nu0: 0.0 }
    }

    pub fn mean_motion(&self) -> f64 {
        (self.gm / self.a.powi(3)).sqrt()
    }

    pub fn semi_latus(&self) -> f64 {
        self.a * (1.0 - self.e * self.e)
    }

    /// True anomaly after `dt` from the element epoch.
    pub fn true_anomaly_at(&self, dt: f64) -> f64 {
        let e = self.e;
        if e == 0.0 {
            return self.nu0 + self.mean_motion() * dt;
        }
        let half = 0.5 * self.nu0;
        let e0 = 2.0 * ((1.0 - e).sqrt() * half.sin()).atan2((1.0 + e).sqrt() * half.cos());
        let m = e0 - e * e0.sin() + self.mean_motion() * dt;
        let ecc = solve_kepler(m, e);
        2.0 * ((1.0 + e).sqrt() * (0.5 * ecc).sin()).atan2((1.0 - e).sqrt() * (0.5 * ecc).cos())
    }
}

/// Eccentric anomaly for mean anomaly `m` (Newton, 1e-12 rad).
pub fn solve_kepler(m: f64, e: f64) -> f64 {
    let m_wrapped = m.rem_euclid(2.0 * PI);
    let offset = m - m_wrapped;
    let mut ecc = if e > 0.8 { PI } else { m_wrapped };
    for _ in 0..100 {
        let f = ecc - e * ecc.sin() - m_wrapped;
        let d = f / (1.0 - e * ecc.cos());
        ecc -= d;
        if d.abs() < KEPLER_TOL {
            break;
        }
    }
    ecc + offset
}

fn lvlh_rtn_similarity(phi_rtn: &Matrix6<f64>) -> Matrix6<f64> {
    // columns of `p` are the RTN unit vectors expressed in LVLH
    let mut p = Matrix6::zeros();
    for (col, e) in [Vector3::x(), Vector3::y(), Vector3::z()].iter().enumerate() {
        let l = lvlh_from_rtn(e);
        for row in 0..3 {
            p[(row, col)] = l[row];
            p[(row + 3, col + 3)] = l[row];
        }
    }
    p * phi_rtn * p.transpose()
}

/// HCW state transition matrix over `dt` for mean motion `n`.
pub fn hcw_stm(n: f64, dt: f64) -> Result<Matrix6<f64>> {
    if !(n > 0.0) {
        return Err(Error::InvalidInput(format!("mean motion must be positive, got {n}")));
    }
    if dt == 0.0 {
        return Ok(Matrix6::identity());
    }
    let nt = n * dt;
    let (s, c) = nt.sin_cos();
    // RTN ordering [R, T, N, R', T', N']
    #[rustfmt::skip]
    let phi = Matrix6::new(
        4.0 - 3.0 * c,       0.0, 0.0,  s / n,               2.0 * (1.0 - c) / n,        0.0,
        6.0 * (s - nt),      1.0, 0.0, -2.0 * (1.0 - c) / n, (4.0 * s - 3.0 * nt) / n,   0.0,
        0.0,                 0.0, c,    0.0,                 0.0,                        s / n,
        3.0 * n * s,         0.0, 0.0,  c,                   2.0 * s,                    0.0,
        -6.0 * n * (1.0 - c), 0.0, 0.0, -2.0 * s,            4.0 * c - 3.0,              0.0,
        0.0,                 0.0, -n * s, 0.0,               0.0,                        c,
    );
    Ok(lvlh_rtn_similarity(&phi))
}

/// YA transformed-state map at true anomaly `theta`: `[x, y, z, x', y', z']`
/// in time to `[x~, y~, z~, x~', y~', z~']` in true anomaly.
fn ya_transform(theta: f64, e: f64, k2: f64) -> Matrix6<f64> {
    let rho = 1.0 + e * theta.cos();
    let mut t = Matrix6::zeros();
    for i in 0..3 {
        t[(i, i)] = rho;
        t[(i + 3, i)] = -e * theta.sin();
        t[(i + 3, i + 3)] = 1.0 / (k2 * rho);
    }
    t
}

fn ya_transform_inv(theta: f64, e: f64, k2: f64) -> Matrix6<f64> {
    let rho = 1.0 + e * theta.cos();
    let mut t = Matrix6::zeros();
    for i in 0..3 {
        t[(i, i)] = 1.0 / rho;
        t[(i + 3, i)] = k2 * e * theta.sin();
        t[(i + 3, i + 3)] = k2 * rho;
    }
    t
}

fn ya_in_plane_inverse(theta: f64, e: f64) -> Matrix4<f64> {
    let rho = 1.0 + e * theta.cos();
    let s = rho * theta.sin();
    let c = rho * theta.cos();
    let e2 = e * e;
    #[rustfmt::skip]
    let m = Matrix4::new(
        1.0 - e2, 3.0 * e * s * (1.0 / rho + 1.0 / (rho * rho)), -e * s * (1.0 + 1.0 / rho), -e * c + 2.0,
        0.0, -3.0 * s * (1.0 / rho + e2 / (rho * rho)), s * (1.0 + 1.0 / rho), c - 2.0 * e,
        0.0, -3.0 * (c / rho + e), c * (1.0 + 1.0 / rho) + e, -s,
        0.0, 3.0 * rho + e2 - 1.0, -rho * rho, e * s,
    );
    m / (1.0 - e2)
}

fn ya_in_plane(theta: f64, e: f64, j: f64) -> Matrix4<f64> {
    let rho = 1.0 + e * theta.cos();
    let s = rho * theta.sin();
    let c = rho * theta.cos();
    let s_p = theta.cos() + e * (2.0 * theta).cos();
    let c_p = -(theta.sin() + e * (2.0 * theta).sin());
    #[rustfmt::skip]
    let m = Matrix4::new(
        1.0, -c * (1.0 + 1.0 / rho), s * (1.0 + 1.0 / rho), 3.0 * rho * rho * j,
        0.0, s, c, 2.0 - 3.0 * e * s * j,
        0.0, 2.0 * s, 2.0 * c - e, 3.0 * (1.0 - 2.0 * e * s * j),
        0.0, s_p, c_p, -3.0 * e * (s_p * j + s / (rho * rho)),
    );
    m
}

/// Yamanaka–Ankersen STM from `t_from` to `t_to` (times since the element epoch).
pub fn ya_stm(el: &KeplerElements, t_from: f64, t_to: f64) -> Result<Matrix6<f64>> {
    let e = el.e;
    if !(0.0..1.0).contains(&e) {
        return Err(Error::InvalidInput(format!("eccentricity {e} outside [0, 1)")));
    }
    if t_from == t_to {
        return Ok(Matrix6::identity());
    }
    let k2 = (el.gm / el.semi_latus().powi(3)).sqrt();
    let th0 = el.true_anomaly_at(t_from);
    let th1 = el.true_anomaly_at(t_to);
    let j = k2 * (t_to - t_from);

    let plane = ya_in_plane(th1, e, j) * ya_in_plane_inverse(th0, e);
    let (sd, cd) = (th1 - th0).sin_cos();
    let normal = Matrix2::new(cd, sd, -sd, cd);

    // transformed-state propagation, state order [x, y, z, x', y', z']
    let mut prop = Matrix6::zeros();
    let in_plane_idx = [0usize, 2, 3, 5];
    for (a, &ia) in in_plane_idx.iter().enumerate() {
        for (b, &ib) in in_plane_idx.iter().enumerate() {
            prop[(ia, ib)] = plane[(a, b)];
        }
    }
    let normal_idx = [1usize, 4];
    for (a, &ia) in normal_idx.iter().enumerate() {
        for (b, &ib) in normal_idx.iter().enumerate() {
            prop[(ia, ib)] = normal[(a, b)];
        }
    }
    Ok(ya_transform_inv(th1, e, k2) * prop * ya_transform(th0, e, k2))
}
