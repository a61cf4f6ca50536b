//! Nonlinear single-track model of a truck-semitrailer combination.
//!
//! Two planar rigid bodies (truck `1`, semitrailer `2`) are coupled by a
//! lateral force constraint at the fifth-wheel king pin. Lateral tire forces
//! follow a magic-formula characteristic with first-order relaxation, and the
//! semitrailer's vertical axle forces vary with the loading state.
//!
//! Coordinates are ISO vehicle axes: x forward, y left, yaw counterclockwise
//! positive, steering angle positive for a left turn. Slip angles are measured
//! from the wheel heading to the contact-point velocity, so the front-axle
//! slip equals `-delta1` when only a steering angle is applied; the lateral
//! force opposes the slip.

mod dynamics;
mod integrate;
mod measurement;
mod tire;

pub use dynamics::{
    continuous_dynamics, continuous_dynamics_detailed, semitrailer_mass, slip_angles,
    vertical_axle_forces, DynamicsDetail,
};
pub use integrate::{discretize_step, rk4_step};
pub use measurement::MeasurementMode;
pub use tire::{mftm_steady_force, tire_force_derivative};

use crate::error::{Error, Result};
use crate::params::VehicleParams;

/// Number of dynamic states of the single-track model.
pub const SSM_DIM: usize = 10;
/// Dynamic states plus the two random-walk states `delta1` and `l_cog`.
pub const AUG_DIM: usize = 12;

/// Indices into the state vector (both the 10-element dynamic state and the
/// 12-element augmented filter state share the first ten slots).
pub mod idx {
    /// Truck lateral velocity (m/s).
    pub const VY1: usize = 0;
    /// Truck yaw rate (rad/s).
    pub const R1: usize = 1;
    /// Semitrailer lateral velocity (m/s).
    pub const VY2: usize = 2;
    /// Semitrailer yaw rate (rad/s).
    pub const R2: usize = 3;
    /// Articulation angle (rad).
    pub const THETA: usize = 4;
    /// Lateral tire forces (N): truck front, truck rear, semitrailer 1-3.
    pub const FY11: usize = 5;
    pub const FY12: usize = 6;
    pub const FY21: usize = 7;
    pub const FY22: usize = 8;
    pub const FY23: usize = 9;
    /// Truck steering angle random-walk state (rad).
    pub const DELTA1: usize = 10;
    /// Semitrailer center-of-gravity distance random-walk state (m).
    pub const LCOG: usize = 11;
}

/// Dynamic state of the single-track model.
pub type SsmState = [f64; SSM_DIM];

/// Exogenous inputs of the continuous-time model.
///
/// Inside the filter, `delta1` and `l_cog` live in the augmented state; for
/// open-loop simulation they are supplied here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelInput {
    /// Truck steering angle (rad).
    pub delta1: f64,
    /// Semitrailer longitudinal velocity (m/s), must be positive.
    pub vx2: f64,
    /// Summed semitrailer vertical axle force (N).
    pub fz2: f64,
    /// King pin to semitrailer center of gravity (m), must be positive.
    pub l_cog: f64,
}

impl ModelInput {
    pub fn validate(&self) -> Result<()> {
        if !(self.vx2 > 0.0) {
            return Err(Error::Domain(format!(
                "longitudinal velocity must be positive, got {}",
                self.vx2
            )));
        }
        if self.fz2 < 0.0 {
            return Err(Error::Domain(format!(
                "vertical axle force must be non-negative, got {}",
                self.fz2
            )));
        }
        if !(self.l_cog > 0.0) {
            return Err(Error::Domain(format!(
                "center-of-gravity distance must be positive, got {}",
                self.l_cog
            )));
        }
        Ok(())
    }
}

/// Per-axle vertical forces: truck front, truck rear, semitrailer 1-3 (N).
pub fn axle_vertical_forces(params: &VehicleParams, fz2: f64) -> Result<[f64; 5]> {
    let [f1, f2, f3] = vertical_axle_forces(fz2)?;
    Ok([
        params.truck_vertical_forces[0],
        params.truck_vertical_forces[1],
        f1,
        f2,
        f3,
    ])
}
