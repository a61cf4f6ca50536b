//! Synthetic maneuver generation and the evaluation harness.
//!
//! Maneuvers excite the lateral dynamics with sinusoidal, step, and ramp
//! steering inputs (up to ±30°) at constant speeds between 3 and 22 m/s.
//! Ground truth comes from simulating the vehicle model with "truth"
//! parameters (a perturbation of the nominal set, so the filter's model is
//! imperfect the way an identified model is); measured channels carry
//! additive Gaussian sensor noise.

pub mod dataset;
pub mod report;

pub use dataset::ManeuverDataset;
pub use report::{rmse, RelativeErrorSummary, RmseReport, Method, Quantity};

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::params::{AxleGroup, VehicleParams};
use crate::vehicle::{discretize_step, idx, ModelInput, SsmState};

/// Maximum steering amplitude (rad): the 30° excitation envelope.
pub const MAX_STEERING: f64 = 30.0 * std::f64::consts::PI / 180.0;
/// Speed envelope (m/s).
pub const SPEED_RANGE: (f64, f64) = (3.0, 22.0);
/// Simulation validity bound on the articulation angle (rad).
pub const THETA_LIMIT: f64 = 1.2;

/// Steering-angle profile of one maneuver. Every profile is zero during the
/// lead-in so filters and sensors see a static segment first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteeringProfile {
    Sine { amplitude: f64, frequency_hz: f64 },
    Step { amplitude: f64 },
    Ramp { amplitude: f64, rise_time: f64 },
}

impl SteeringProfile {
    pub fn amplitude(&self) -> f64 {
        match *self {
            SteeringProfile::Sine { amplitude, .. }
            | SteeringProfile::Step { amplitude }
            | SteeringProfile::Ramp { amplitude, .. } => amplitude,
        }
    }

    /// Steering angle at `t` seconds after the lead-in.
    pub fn angle(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match *self {
            SteeringProfile::Sine { amplitude, frequency_hz } => {
                amplitude * (2.0 * std::f64::consts::PI * frequency_hz * t).sin()
            }
            SteeringProfile::Step { amplitude } => amplitude,
            SteeringProfile::Ramp { amplitude, rise_time } => {
                if rise_time <= 0.0 || t >= rise_time {
                    amplitude
                } else {
                    amplitude * t / rise_time
                }
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SteeringProfile::Sine { .. } => "sine",
            SteeringProfile::Step { .. } => "step",
            SteeringProfile::Ramp { .. } => "ramp",
        }
    }
}

/// Payload mass and longitudinal position on the semitrailer bed.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingState {
    pub id: String,
    pub payload_kg: f64,
    /// Payload center of gravity behind the king pin (m).
    pub payload_position: f64,
}

/// Empty-trailer constants used by the static vertical model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrailerTare {
    pub mass_kg: f64,
    pub cog_position: f64,
}

impl Default for TrailerTare {
    fn default() -> Self {
        Self {
            mass_kg: 7500.0,
            cog_position: 6.0,
        }
    }
}

impl LoadingState {
    pub fn validate(&self, bed: (f64, f64)) -> Result<()> {
        if self.payload_kg < 0.0 {
            return Err(Error::Config(format!(
                "loading state {}: payload must be non-negative",
                self.id
            )));
        }
        if self.payload_kg > 0.0
            && !(self.payload_position >= bed.0 && self.payload_position <= bed.1)
        {
            return Err(Error::Config(format!(
                "loading state {}: payload position {} outside bed {:?}",
                self.id, self.payload_position, bed
            )));
        }
        Ok(())
    }

    /// Combined mass and center of gravity, and the implied summed vertical
    /// axle force `F_z2 = m2 g l_cog / l_agg` (the inverse of the static mass
    /// relation).
    pub fn vertical_state(&self, tare: TrailerTare, params: &VehicleParams) -> (f64, f64) {
        let m2 = tare.mass_kg + self.payload_kg;
        let l_cog = (tare.mass_kg * tare.cog_position + self.payload_kg * self.payload_position) / m2;
        let fz2 = m2 * params.gravity * l_cog / params.hitch_to_gear_center;
        (fz2, l_cog)
    }
}

/// One synthetic maneuver to generate.
#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverSpec {
    pub name: String,
    pub steering: SteeringProfile,
    /// Constant longitudinal speed (m/s), within [3, 22].
    pub speed: f64,
    /// Zero-steering lead-in (s); also the static segment used to measure
    /// the yaw-rate sensor noise.
    pub lead_in: f64,
    /// Total duration including the lead-in (s).
    pub duration: f64,
    pub loading: LoadingState,
    pub seed: u64,
}

impl ManeuverSpec {
    pub fn validate(&self) -> Result<()> {
        let amp = self.steering.amplitude().abs();
        if amp > MAX_STEERING + 1e-12 {
            return Err(Error::Config(format!(
                "maneuver {}: steering amplitude {amp} exceeds the ±30° envelope",
                self.name
            )));
        }
        if !(self.speed >= SPEED_RANGE.0 && self.speed <= SPEED_RANGE.1) {
            return Err(Error::Config(format!(
                "maneuver {}: speed {} outside {:?}",
                self.name, self.speed, SPEED_RANGE
            )));
        }
        if !(self.duration > self.lead_in && self.lead_in >= 0.0) {
            return Err(Error::Config(format!(
                "maneuver {}: duration must exceed the lead-in",
                self.name
            )));
        }
        Ok(())
    }
}

/// Additive sensor noise levels; yaw rate can instead be synthesized from
/// left/right wheel speeds of the middle semitrailer axle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorNoise {
    pub sigma_vx: f64,
    pub sigma_yaw_rate: f64,
    pub sigma_fz: f64,
    pub yaw_from_wheel_speeds: bool,
    pub track_width: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self {
            sigma_vx: 0.05,
            sigma_yaw_rate: 0.005,
            sigma_fz: 500.0,
            yaw_from_wheel_speeds: false,
            track_width: 2.0,
        }
    }
}

/// Deterministic "truth" parameters: tire parameters of every axle group
/// scaled by ±magnitude with seed-derived signs. The filter keeps the nominal
/// set, so the model mismatch of a real identified model is re-created.
pub fn perturb_tire_params(nominal: &VehicleParams, magnitude: f64, seed: u64) -> VehicleParams {
    use rand::Rng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = nominal.clone();
    for group in AxleGroup::ALL {
        let mut tire = match group {
            AxleGroup::TruckFront => out.tires[0],
            AxleGroup::TruckRear => out.tires[1],
            AxleGroup::Trailer => out.tires[2],
        };
        let mut flip = || 1.0 + magnitude * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        tire.shape_c *= flip();
        tire.peak_d *= flip();
        tire.stiffness_scale *= flip();
        tire.load_scale *= flip();
        tire.relaxation_length *= flip();
        out.set_tire_group(group, tire);
    }
    out
}

/// Simulate one maneuver with the given truth parameters and sensor noise.
pub fn generate_maneuver(
    spec: &ManeuverSpec,
    truth_params: &VehicleParams,
    tare: TrailerTare,
    noise: &SensorNoise,
) -> Result<ManeuverDataset> {
    spec.validate()?;
    truth_params.validate()?;
    let gen_err = |reason: String| Error::Generation {
        spec: spec.name.clone(),
        reason,
    };

    let dt = 0.01;
    let n = (spec.duration / dt).round() as usize;
    let (fz2, l_cog) = spec.loading.vertical_state(tare, truth_params);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).map_err(|e| gen_err(e.to_string()))?;

    let mut state: SsmState = [0.0; 10];
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        let delta1 = spec.steering.angle(t - spec.lead_in);
        let input = ModelInput {
            delta1,
            vx2: spec.speed,
            fz2,
            l_cog,
        };

        let mut row = [0.0; dataset::COLUMNS.len()];
        row[dataset::COL_TIME] = t;
        row[dataset::COL_STATE..dataset::COL_STATE + 10].copy_from_slice(&state);
        row[dataset::COL_STATE + idx::DELTA1] = delta1;
        row[dataset::COL_STATE + idx::LCOG] = l_cog;
        row[dataset::COL_IN_DELTA1] = delta1;
        row[dataset::COL_IN_VX2] = spec.speed;
        row[dataset::COL_IN_FZ2] = fz2;
        row[dataset::COL_MEAS_VX2] = spec.speed + noise.sigma_vx * normal.sample(&mut rng);
        row[dataset::COL_MEAS_PSI2DOT] = if noise.yaw_from_wheel_speeds {
            // wheel speeds of the middle trailer axle; per-wheel noise sized so
            // the difference quotient keeps the configured yaw-rate sigma
            let sigma_wheel = noise.sigma_yaw_rate * noise.track_width / std::f64::consts::SQRT_2;
            let v_left = spec.speed - state[idx::R2] * noise.track_width / 2.0
                + sigma_wheel * normal.sample(&mut rng);
            let v_right = spec.speed + state[idx::R2] * noise.track_width / 2.0
                + sigma_wheel * normal.sample(&mut rng);
            (v_right - v_left) / noise.track_width
        } else {
            state[idx::R2] + noise.sigma_yaw_rate * normal.sample(&mut rng)
        };
        row[dataset::COL_MEAS_FZ2] = fz2 + noise.sigma_fz * normal.sample(&mut rng);
        rows.push(row);

        state = discretize_step(&state, &input, truth_params, dt)
            .map_err(|e| gen_err(format!("simulation failed at t = {t:.2} s: {e}")))?;
        if state.iter().any(|v| !v.is_finite()) || state[idx::THETA].abs() > THETA_LIMIT {
            return Err(gen_err(format!(
                "unstable simulation at t = {t:.2} s (theta = {:.3} rad)",
                state[idx::THETA]
            )));
        }
    }

    let ds = ManeuverDataset {
        dt,
        meta: vec![
            ("maneuver".into(), spec.name.clone()),
            ("steering".into(), spec.steering.kind().into()),
            ("loading_state".into(), spec.loading.id.clone()),
            ("speed_mps".into(), format!("{}", spec.speed)),
            ("seed".into(), format!("{}", spec.seed)),
            ("fz2_n".into(), format!("{fz2:.3}")),
            ("lcog_m".into(), format!("{l_cog:.6}")),
            ("lead_in_s".into(), format!("{}", spec.lead_in)),
        ],
        rows,
    };
    ds.validate()?;
    Ok(ds)
}

/// Sample variance of the measured yaw rate over the static lead-in, the
/// measurement-derived baseline for the filter's R.
pub fn yaw_rate_noise_variance(ds: &ManeuverDataset, lead_in: f64) -> Result<f64> {
    let n = ((lead_in / ds.dt).floor() as usize).min(ds.len());
    if n < 20 {
        return Err(Error::Config(
            "lead-in too short to estimate the yaw-rate noise".into(),
        ));
    }
    let samples: Vec<f64> = (0..n).map(|k| ds.measurement(k).1).collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    Ok(samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64)
}
