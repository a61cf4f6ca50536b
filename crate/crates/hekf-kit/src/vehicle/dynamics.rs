//! Continuous-time equations of motion of the articulated combination.
//!
//! The truck and semitrailer exchange a lateral constraint force at the king
//! pin. The four lateral/yaw accelerations and the coupling force are solved
//! from a 5x5 linear system: two force balances, two moment balances, and the
//! differentiated velocity constraint at the pin. The constraint force is
//! applied laterally in each body frame (frame rotation of the force through
//! the articulation angle is neglected), while the pin velocity constraint
//! itself keeps the full trigonometry.

use nalgebra::{Matrix5, Vector5};

use super::tire::{mftm_steady_force, tire_force_derivative};
use super::{axle_vertical_forces, idx, ModelInput, SsmState};
use crate::error::{Error, Result};
use crate::params::VehicleParams;

/// Split the summed semitrailer axle load equally over the three axles (N).
pub fn vertical_axle_forces(fz2: f64) -> Result<[f64; 3]> {
    if fz2 < 0.0 {
        return Err(Error::Domain(format!(
            "summed vertical force must be non-negative, got {fz2}"
        )));
    }
    let per_axle = fz2 / 3.0;
    Ok([per_axle, per_axle, per_axle])
}

/// Semitrailer mass from the static vertical model (kg).
///
/// Moment balance about the king pin: the axle group at `l_agg` carries
/// `F_z2`, gravity acts at `l_cog`, hence `m2 = l_agg * F_z2 / (l_cog * g)`.
pub fn semitrailer_mass(fz2: f64, l_cog: f64, l_agg: f64, gravity: f64) -> Result<f64> {
    if !(l_cog > 0.0) {
        return Err(Error::Domain(format!(
            "center-of-gravity distance must be positive, got {l_cog}"
        )));
    }
    Ok(l_agg * fz2 / (l_cog * gravity))
}

/// Slip angles of the five lumped axles (rad).
///
/// Measured from the wheel heading to the contact-point velocity; the steered
/// front axle resolves the velocity in the wheel frame, so pure steering gives
/// a slip of `-delta1`.
pub fn slip_angles(state: &SsmState, input: &ModelInput, params: &VehicleParams) -> Result<[f64; 5]> {
    input.validate()?;
    let (vx1, _) = body_velocities(state, input);
    if !(vx1 > 0.0) {
        return Err(Error::Domain(format!(
            "truck longitudinal velocity must be positive, got {vx1}"
        )));
    }
    let vy1 = state[idx::VY1];
    let r1 = state[idx::R1];
    let vy2 = state[idx::VY2];
    let r2 = state[idx::R2];

    // Truck front axle: contact velocity rotated into the steered wheel frame.
    let (vcx, vcy) = (vx1, vy1 + params.truck_front_axle * r1);
    let (sd, cd) = input.delta1.sin_cos();
    let front = (-sd * vcx + cd * vcy).atan2(cd * vcx + sd * vcy);
    let rear = (vy1 - params.truck_rear_axle * r1).atan2(vx1);

    let mut out = [front, rear, 0.0, 0.0, 0.0];
    for (slot, s) in out[2..].iter_mut().zip(params.trailer_axles) {
        *slot = (vy2 + (input.l_cog - s) * r2).atan2(input.vx2);
    }
    if out.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numerical("non-finite slip angle".into()));
    }
    Ok(out)
}

/// Truck longitudinal velocity and the pin lateral velocity seen from the
/// semitrailer, both derived from the rigid coupling.
fn body_velocities(state: &SsmState, input: &ModelInput) -> (f64, f64) {
    let (st, ct) = state[idx::THETA].sin_cos();
    let pin_lat = state[idx::VY2] + input.l_cog * state[idx::R2];
    let vx1 = ct * input.vx2 - st * pin_lat;
    (vx1, pin_lat)
}

/// Diagnostics of one dynamics evaluation.
#[derive(Debug, Clone, Copy)]
pub struct DynamicsDetail {
    pub derivative: SsmState,
    /// Lateral king-pin constraint force acting on the truck (N).
    pub coupling_force: f64,
    /// Truck longitudinal velocity from the coupling constraint (m/s).
    pub vx1: f64,
    pub slip_angles: [f64; 5],
    /// Steady-state lateral forces the tire states relax toward (N).
    pub steady_forces: [f64; 5],
}

/// Time derivative of the ten dynamic states.
pub fn continuous_dynamics(
    state: &SsmState,
    input: &ModelInput,
    params: &VehicleParams,
) -> Result<SsmState> {
    Ok(continuous_dynamics_detailed(state, input, params)?.derivative)
}

pub fn continuous_dynamics_detailed(
    state: &SsmState,
    input: &ModelInput,
    params: &VehicleParams,
) -> Result<DynamicsDetail> {
    let slips = slip_angles(state, input, params)?;
    let (vx1, pin_lat) = body_velocities(state, input);
    let fz = axle_vertical_forces(params, input.fz2)?;
    let m2 = semitrailer_mass(
        input.fz2,
        input.l_cog,
        params.hitch_to_gear_center,
        params.gravity,
    )?;

    // Lateral force opposes the slip angle.
    let mut steady = [0.0; 5];
    let mut dforce = [0.0; 5];
    for i in 0..5 {
        let vx = if i < 2 { vx1 } else { input.vx2 };
        steady[i] = mftm_steady_force(-slips[i], fz[i], &params.tires[i], params.mu_max)?;
        dforce[i] = tire_force_derivative(
            state[idx::FY11 + i],
            -slips[i],
            fz[i],
            vx,
            &params.tires[i],
            params.mu_max,
        )?;
    }

    let r1 = state[idx::R1];
    let r2 = state[idx::R2];
    let theta_dot = r2 - r1;
    let (st, ct) = state[idx::THETA].sin_cos();
    let cd = input.delta1.cos();
    let f11 = state[idx::FY11];
    let f12 = state[idx::FY12];
    let trailer_sum = state[idx::FY21] + state[idx::FY22] + state[idx::FY23];
    let trailer_moment: f64 = params
        .trailer_axles
        .iter()
        .zip([state[idx::FY21], state[idx::FY22], state[idx::FY23]])
        .map(|(s, f)| (input.l_cog - s) * f)
        .sum();

    // Unknowns: [dvy1, dr1, dvy2, dr2, coupling force].
    let mut a = Matrix5::<f64>::zeros();
    let mut b = Vector5::<f64>::zeros();
    a[(0, 0)] = params.truck_mass;
    a[(0, 4)] = -1.0;
    b[0] = f11 * cd + f12 - params.truck_mass * vx1 * r1;
    a[(1, 1)] = params.truck_yaw_inertia;
    a[(1, 4)] = params.truck_hitch;
    b[1] = params.truck_front_axle * f11 * cd - params.truck_rear_axle * f12;
    a[(2, 2)] = m2;
    a[(2, 4)] = 1.0;
    b[2] = trailer_sum - m2 * input.vx2 * r2;
    a[(3, 3)] = params.trailer_yaw_inertia;
    a[(3, 4)] = input.l_cog;
    b[3] = trailer_moment;
    a[(4, 0)] = 1.0;
    a[(4, 1)] = -params.truck_hitch;
    a[(4, 2)] = -ct;
    a[(4, 3)] = -input.l_cog * ct;
    b[4] = input.vx2 * ct * theta_dot - pin_lat * st * theta_dot;

    let lu = a.lu();
    let sol = lu
        .solve(&b)
        .ok_or_else(|| Error::Numerical("singular coupling system".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite acceleration solution".into()));
    }

    let mut dx: SsmState = [0.0; 10];
    dx[idx::VY1] = sol[0];
    dx[idx::R1] = sol[1];
    dx[idx::VY2] = sol[2];
    dx[idx::R2] = sol[3];
    dx[idx::THETA] = theta_dot;
    dx[idx::FY11..=idx::FY23].copy_from_slice(&dforce);

    Ok(DynamicsDetail {
        derivative: dx,
        coupling_force: sol[4],
        vx1,
        slip_angles: slips,
        steady_forces: steady,
    })
}
