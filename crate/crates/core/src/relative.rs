//! Linearized relative motion about a CR3BP chief, expressed in LVLH.
//!
//! `x' = A(t) x + B u` with `x = [rho, rho_dot]`.

use nalgebra::{Matrix3, Matrix6, Matrix6x3, Vector3, Vector6};

use crate::cr3bp::{lvlh_frame, skew, tidal_tensor, Cr3bpSystem, LvlhFrame, SynodicState};
use crate::error::Result;

/// Deputy position and velocity relative to the chief, LVLH axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeState {
    pub rho: Vector3<f64>,
    pub rho_dot: Vector3<f64>,
    pub t: f64,
}

impl RelativeState {
    pub fn new(rho: Vector3<f64>, rho_dot: Vector3<f64>, t: f64) -> Self {
        Self { rho, rho_dot, t }
    }

    pub fn zero(t: f64) -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros(), t)
    }

    pub fn from_vector(x: &Vector6<f64>, t: f64) -> Self {
        Self {
            rho: x.fixed_rows::<3>(0).into(),
            rho_dot: x.fixed_rows::<3>(3).into(),
            t,
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.rho);
        x.fixed_rows_mut::<3>(3).copy_from(&self.rho_dot);
        x
    }

    /// Converts km, km/s, hours to DU, DU/TU, TU.
    pub fn nondimensional(&self, sys: &Cr3bpSystem) -> Self {
        Self {
            rho: self.rho / sys.du,
            rho_dot: self.rho_dot * (sys.tu / sys.du),
            t: sys.hours_to_tu(self.t),
        }
    }

    /// Converts DU, DU/TU, TU to km, km/s, hours.
    pub fn dimensional(&self, sys: &Cr3bpSystem) -> Self {
        Self {
            rho: self.rho * sys.du,
            rho_dot: self.rho_dot * (sys.du / sys.tu),
            t: sys.tu_to_hours(self.t),
        }
    }
}

/// The 6x6 LTV plant matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantMatrix {
    pub a: Matrix6<f64>,
}

impl PlantMatrix {
    /// Lower-left block `A_rho_dot_rho`.
    pub fn gravity_block(&self) -> Matrix3<f64> {
        self.a.fixed_view::<3, 3>(3, 0).into()
    }

    /// Lower-right block `-2 Omega`.
    pub fn coriolis_block(&self) -> Matrix3<f64> {
        self.a.fixed_view::<3, 3>(3, 3).into()
    }

    fn assemble(grav: &Matrix3<f64>, omega: &Vector3<f64>) -> Self {
        let mut a = Matrix6::zeros();
        a.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        a.fixed_view_mut::<3, 3>(3, 0).copy_from(grav);
        a.fixed_view_mut::<3, 3>(3, 3).copy_from(&(skew(omega) * -2.0));
        Self { a }
    }
}

/// Impulsive control enters as a pure velocity change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ControlMatrixB;

impl ControlMatrixB {
    pub fn matrix() -> Matrix6x3<f64> {
        let mut b = Matrix6x3::zeros();
        b[(3, 0)] = 1.0;
        b[(4, 1)] = 1.0;
        b[(5, 2)] = 1.0;
        b
    }
}

fn gravity_block_from_frame(
    chief: &SynodicState,
    frame: &LvlhFrame,
    sys: &Cr3bpSystem,
) -> Matrix3<f64> {
    let r_l = frame.to_lvlh(&chief.r);
    // chief position relative to the Earth, which sits at +1 DU along x
    let r_earth = chief.r - sys.earth_position();
    let re_l = frame.to_lvlh(&r_earth);
    let w = skew(&frame.omega);
    -skew(&frame.omega_dot) - w * w
        + tidal_tensor(sys.mu, &r_l)
        + tidal_tensor(1.0 - sys.mu, &re_l)
}

/// Lower-left block of the plant: Euler, centrifugal and tidal terms in LVLH.
pub fn grav_gradient_block(chief: &SynodicState, sys: &Cr3bpSystem) -> Result<Matrix3<f64>> {
    let frame = lvlh_frame(chief, sys)?;
    Ok(gravity_block_from_frame(chief, &frame, sys))
}

/// Plant matrix for a chief state.
pub fn plant_matrix(chief: &SynodicState, sys: &Cr3bpSystem) -> Result<PlantMatrix> {
    let frame = lvlh_frame(chief, sys)?;
    Ok(plant_from_frame(chief, &frame, sys))
}

pub fn plant_from_frame(chief: &SynodicState, frame: &LvlhFrame, sys: &Cr3bpSystem) -> PlantMatrix {
    PlantMatrix::assemble(&gravity_block_from_frame(chief, frame, sys), &frame.omega)
}

/// `A x + B u`.
pub fn relative_rate(x: &RelativeState, a: &PlantMatrix, u: &Vector3<f64>) -> Vector6<f64> {
    let mut rate = a.a * x.to_vector();
    rate[3] += u.x;
    rate[4] += u.y;
    rate[5] += u.z;
    rate
}
