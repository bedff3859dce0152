//! Impulsive relative-motion maneuver planning about cislunar (CR3BP) chief orbits.

pub mod catalog;
pub mod cr3bp;
pub mod error;
pub mod expm;
pub mod halo;
pub mod kd;
pub mod montecarlo;
pub mod mpc;
pub mod ode;
pub mod relative;
pub mod scenario;
pub mod sim;
pub mod stm;
pub mod twobody;

pub use error::{Error, Result};
