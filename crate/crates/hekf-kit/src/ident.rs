//! Identification of the fifteen tire parameters against ground-truth state
//! trajectories: open-loop simulation, NMSE cost, particle swarm search.

use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::ManeuverDataset;
use crate::kv::{self, KvFile};
use crate::params::{AxleGroup, TireParams, VehicleParams};
use crate::pso::{self, IdentResult, PsoConfig};
use crate::vehicle::{discretize_step, idx, ModelInput, SsmState};

/// Cost returned for diverged simulations, so the swarm retreats from
/// unstable parameter regions.
pub const DIVERGENCE_PENALTY: f64 = 1e6;

/// Ground-truth channels entering the identification cost.
pub const IDENT_CHANNELS: [usize; 5] = [idx::R1, idx::R2, idx::THETA, idx::FY21, idx::FY23];

/// The fifteen identifiable parameters in bounds-file key order.
pub fn parameter_names() -> Vec<String> {
    let mut names = Vec::with_capacity(15);
    for group in AxleGroup::ALL {
        for field in [
            "shape_c",
            "peak_d",
            "stiffness_scale",
            "load_scale",
            "relaxation_length",
        ] {
            names.push(format!("{}.{}", group.key(), field));
        }
    }
    names
}

/// Write a 15-element vector into a parameter set (per axle group:
/// `[C, D, c1, c2, l_relax]`).
pub fn apply_parameter_vector(base: &VehicleParams, vector: &[f64]) -> Result<VehicleParams> {
    if vector.len() != 15 {
        return Err(Error::Config(format!(
            "parameter vector must have 15 entries, got {}",
            vector.len()
        )));
    }
    let mut out = base.clone();
    for (g, group) in AxleGroup::ALL.iter().enumerate() {
        let v = &vector[5 * g..5 * g + 5];
        out.set_tire_group(
            *group,
            TireParams {
                shape_c: v[0],
                peak_d: v[1],
                stiffness_scale: v[2],
                load_scale: v[3],
                relaxation_length: v[4],
            },
        );
    }
    out.validate()?;
    Ok(out)
}

/// Extract the 15-element vector from a parameter set.
pub fn extract_parameter_vector(params: &VehicleParams) -> Vec<f64> {
    params
        .tire_groups()
        .iter()
        .flat_map(|t| {
            [
                t.shape_c,
                t.peak_d,
                t.stiffness_scale,
                t.load_scale,
                t.relaxation_length,
            ]
        })
        .collect()
}

/// Identification bounds per parameter, in [`parameter_names`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentBounds {
    pub bounds: Vec<(f64, f64)>,
}

impl IdentBounds {
    /// Default search box around a nominal set: wide on the stiffness curve
    /// scales and shape, tight on the peak factor. The peak factor only enters
    /// through the ratio `c1 / D`, so its interval width directly limits how
    /// well `c1` can be pinned down.
    pub fn around(nominal: &VehicleParams) -> Self {
        let mut bounds = Vec::with_capacity(15);
        for tire in nominal.tire_groups() {
            bounds.push((0.7 * tire.shape_c, 1.4 * tire.shape_c));
            bounds.push((0.95 * tire.peak_d, 1.05 * tire.peak_d));
            bounds.push((0.5 * tire.stiffness_scale, 2.0 * tire.stiffness_scale));
            bounds.push((0.5 * tire.load_scale, 2.0 * tire.load_scale));
            bounds.push((0.4 * tire.relaxation_length, 2.0 * tire.relaxation_length));
        }
        Self { bounds }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut kv = KvFile::load(path)?;
        let mut bounds = Vec::with_capacity(15);
        for name in parameter_names() {
            let lo = kv.take_f64(&format!("{name}.min"))?;
            let hi = kv.take_f64(&format!("{name}.max"))?;
            if !(lo < hi) {
                return Err(Error::Config(format!("bounds of {name} must satisfy min < max")));
            }
            bounds.push((lo, hi));
        }
        kv.finish()?;
        Ok(Self { bounds })
    }

    pub fn save(&self, path: impl AsRef<Path>, header: &str) -> Result<()> {
        let mut pairs = Vec::new();
        for (name, (lo, hi)) in parameter_names().iter().zip(&self.bounds) {
            pairs.push((format!("{name}.min"), *lo));
            pairs.push((format!("{name}.max"), *hi));
        }
        std::fs::write(path.as_ref(), kv::render(header, &pairs))
            .map_err(|e| Error::io(path.as_ref(), e))
    }
}

/// Open-loop simulation NMSE of a candidate parameter set against the
/// ground-truth channels of one or more maneuvers.
///
/// Per channel: `sum((sim - truth)^2) / sum((truth - mean(truth))^2)`; the
/// cost is the mean over channels and maneuvers. Forces are expressed in kN
/// first (NMSE is scale-invariant per channel; the conversion just keeps
/// intermediate magnitudes comparable). A diverged simulation yields a large
/// finite penalty.
pub fn nmse_cost(params: &VehicleParams, datasets: &[ManeuverDataset]) -> Result<f64> {
    if datasets.is_empty() {
        return Err(Error::Config("identification needs at least one maneuver".into()));
    }
    let mut total = 0.0;
    for ds in datasets {
        total += maneuver_nmse(params, ds)?;
    }
    Ok(total / datasets.len() as f64)
}

fn maneuver_nmse(params: &VehicleParams, ds: &ManeuverDataset) -> Result<f64> {
    ds.validate()?;
    let n = ds.len();
    let mut sim = vec![[0.0_f64; IDENT_CHANNELS.len()]; n];
    let mut state: SsmState = [0.0; 10];
    // initial state from the recorded truth
    let t0 = ds.truth(0);
    state.copy_from_slice(&t0[..10]);

    for k in 0..n {
        for (c, &ch) in IDENT_CHANNELS.iter().enumerate() {
            let scale = if ch == idx::FY21 || ch == idx::FY23 {
                1e-3 // N -> kN
            } else {
                1.0
            };
            sim[k][c] = state[ch] * scale;
        }
        if k + 1 < n {
            let (delta1, vx2, fz2) = ds.input(k);
            let l_cog = ds.truth(k)[idx::LCOG];
            let input = ModelInput {
                delta1,
                vx2,
                fz2,
                l_cog,
            };
            state = match discretize_step(&state, &input, params, ds.dt) {
                Ok(s) => s,
                Err(_) => return Ok(DIVERGENCE_PENALTY),
            };
            if state.iter().any(|v| !v.is_finite())
                || state[idx::THETA].abs() > crate::harness::THETA_LIMIT
            {
                return Ok(DIVERGENCE_PENALTY);
            }
        }
    }

    let mut cost = 0.0;
    for (c, &ch) in IDENT_CHANNELS.iter().enumerate() {
        let scale = if ch == idx::FY21 || ch == idx::FY23 { 1e-3 } else { 1.0 };
        let truth: Vec<f64> = ds.truth_channel(ch).iter().map(|v| v * scale).collect();
        let mean = truth.iter().sum::<f64>() / n as f64;
        let denom: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
        let num: f64 = (0..n).map(|k| (sim[k][c] - truth[k]) * (sim[k][c] - truth[k])).sum();
        if denom <= 0.0 {
            // a flat truth channel carries no information for this maneuver
            cost += if num > 0.0 { DIVERGENCE_PENALTY } else { 0.0 };
        } else {
            cost += num / denom;
        }
    }
    Ok(cost / IDENT_CHANNELS.len() as f64)
}

/// Run the swarm over the 15 tire parameters.
pub fn identify(
    config: &PsoConfig,
    base: &VehicleParams,
    datasets: &[ManeuverDataset],
) -> Result<(VehicleParams, IdentResult)> {
    if config.bounds.len() != 15 {
        return Err(Error::Config(format!(
            "identification expects 15 bounded parameters, got {}",
            config.bounds.len()
        )));
    }
    for ds in datasets {
        for &ch in &IDENT_CHANNELS {
            let truth = ds.truth_channel(ch);
            if truth.iter().all(|v| *v == truth[0]) && datasets.len() == 1 {
                return Err(Error::Config(format!(
                    "ground-truth channel {ch} is constant; dataset cannot identify the model"
                )));
            }
        }
    }
    let result = pso::minimize(config, |vector| {
        match apply_parameter_vector(base, vector) {
            Ok(params) => nmse_cost(&params, datasets).unwrap_or(DIVERGENCE_PENALTY),
            Err(_) => DIVERGENCE_PENALTY,
        }
    })?;
    let best = apply_parameter_vector(base, &result.best_position)?;
    Ok((best, result))
}
