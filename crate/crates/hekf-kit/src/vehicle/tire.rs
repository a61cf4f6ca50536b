//! Magic-formula lateral tire characteristic with relaxation dynamics.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::params::TireParams;

/// Steady-state lateral force of one lumped axle (N).
///
/// `mu_max * F_z * sin(C * atan(B * tan(alpha)))` with the load-dependent
/// stiffness factor `B = c1 * sin(2 * atan(F_z / c2)) / (C * D)`. The result
/// is odd in `alpha` and bounded by `mu_max * F_z`.
pub fn mftm_steady_force(alpha: f64, fz: f64, tire: &TireParams, mu_max: f64) -> Result<f64> {
    if fz < 0.0 {
        return Err(Error::Domain(format!(
            "vertical force must be non-negative, got {fz}"
        )));
    }
    if !alpha.is_finite() || alpha.abs() >= FRAC_PI_2 {
        return Err(Error::Domain(format!(
            "slip angle {alpha} outside (-pi/2, pi/2)"
        )));
    }
    let b = tire.stiffness_scale * (2.0 * (fz / tire.load_scale).atan()).sin()
        / (tire.shape_c * tire.peak_d);
    Ok(mu_max * fz * (tire.shape_c * (b * alpha.tan()).atan()).sin())
}

/// Time derivative of the relaxed lateral force (N/s).
///
/// First-order lag toward the steady-state force with time constant
/// `l_relax / v_x`; the unique fixed point is the steady-state force.
pub fn tire_force_derivative(
    fy: f64,
    alpha: f64,
    fz: f64,
    vx: f64,
    tire: &TireParams,
    mu_max: f64,
) -> Result<f64> {
    if !(vx > 0.0) {
        return Err(Error::Domain(format!(
            "longitudinal velocity must be positive, got {vx}"
        )));
    }
    let steady = mftm_steady_force(alpha, fz, tire, mu_max)?;
    Ok(vx / tire.relaxation_length * (steady - fy))
}
