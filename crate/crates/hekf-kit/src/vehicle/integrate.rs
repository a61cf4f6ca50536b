//! Fixed-step fourth-order Runge-Kutta integration.

use super::{continuous_dynamics, ModelInput, SsmState};
use crate::error::{Error, Result};
use crate::params::VehicleParams;

/// One classical RK4 step of a generic autonomous system.
pub fn rk4_step<const N: usize, F>(f: F, x: &[f64; N], dt: f64) -> Result<[f64; N]>
where
    F: Fn(&[f64; N]) -> Result<[f64; N]>,
{
    let k1 = f(x)?;
    let k2 = f(&add_scaled(x, &k1, dt / 2.0))?;
    let k3 = f(&add_scaled(x, &k2, dt / 2.0))?;
    let k4 = f(&add_scaled(x, &k3, dt))?;
    let mut out = *x;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

fn add_scaled<const N: usize>(x: &[f64; N], d: &[f64; N], s: f64) -> [f64; N] {
    let mut out = *x;
    for i in 0..N {
        out[i] += s * d[i];
    }
    out
}

/// Advance the dynamic state by one fixed RK4 step with the input held
/// constant over the step.
pub fn discretize_step(
    state: &SsmState,
    input: &ModelInput,
    params: &VehicleParams,
    dt: f64,
) -> Result<SsmState> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    rk4_step(|x| continuous_dynamics(x, input, params), state, dt)
}
