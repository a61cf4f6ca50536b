//! Global-best particle swarm optimization with velocity clamping and bound
//! reflection.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Swarm hyperparameters and search bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub iterations: usize,
    /// Velocity clamp as a fraction of each dimension's range.
    pub velocity_clamp: f64,
    pub seed: u64,
    /// Per-dimension `(lower, upper)` bounds.
    pub bounds: Vec<(f64, f64)>,
}

impl PsoConfig {
    /// Constriction-style defaults: swarm 40, inertia 0.729,
    /// cognitive = social = 1.494, 300 iterations.
    pub fn new(bounds: Vec<(f64, f64)>, seed: u64) -> Self {
        Self {
            swarm_size: 40,
            inertia: 0.729,
            cognitive: 1.494,
            social: 1.494,
            iterations: 300,
            velocity_clamp: 0.5,
            seed,
            bounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::Config("swarm size must be at least 2".into()));
        }
        if self.bounds.is_empty() {
            return Err(Error::Config("PSO needs at least one dimension".into()));
        }
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "bounds of dimension {i} must be finite with lower < upper, got ({lo}, {hi})"
                )));
            }
        }
        if !(self.velocity_clamp > 0.0) || self.iterations == 0 {
            return Err(Error::Config("invalid velocity clamp or iteration budget".into()));
        }
        Ok(())
    }
}

/// Outcome of one swarm run.
#[derive(Debug, Clone)]
pub struct IdentResult {
    pub best_position: Vec<f64>,
    pub best_cost: f64,
    /// Global-best cost after each iteration (non-increasing).
    pub cost_history: Vec<f64>,
}

/// Reflect a position into the bounds, flipping the velocity component.
fn reflect(pos: &mut f64, vel: &mut f64, lo: f64, hi: f64) {
    // a couple of reflections suffice for clamped velocities
    for _ in 0..4 {
        if *pos < lo {
            *pos = lo + (lo - *pos);
            *vel = -*vel;
        } else if *pos > hi {
            *pos = hi - (*pos - hi);
            *vel = -*vel;
        } else {
            return;
        }
    }
    *pos = pos.clamp(lo, hi);
}

/// Minimize `cost` with a global-best swarm. Costs evaluate in parallel;
/// random numbers are drawn sequentially, so runs are seed-deterministic.
/// Non-finite costs count as infeasible.
pub fn minimize<F>(config: &PsoConfig, cost: F) -> Result<IdentResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let dim = config.bounds.len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let ranges: Vec<f64> = config.bounds.iter().map(|(lo, hi)| hi - lo).collect();
    let v_max: Vec<f64> = ranges.iter().map(|r| r * config.velocity_clamp).collect();

    let mut positions: Vec<Vec<f64>> = (0..config.swarm_size)
        .map(|_| {
            config
                .bounds
                .iter()
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect()
        })
        .collect();
    let mut velocities: Vec<Vec<f64>> = (0..config.swarm_size)
        .map(|_| v_max.iter().map(|v| rng.gen_range(-v..*v)).collect())
        .collect();

    let sanitize = |c: f64| if c.is_finite() { c } else { f64::INFINITY };
    let mut personal_best = positions.clone();
    let mut personal_cost: Vec<f64> = positions
        .par_iter()
        .map(|p| sanitize(cost(p)))
        .collect();

    let mut best_idx = 0;
    for i in 1..config.swarm_size {
        if personal_cost[i] < personal_cost[best_idx] {
            best_idx = i;
        }
    }
    let mut global_best = personal_best[best_idx].clone();
    let mut global_cost = personal_cost[best_idx];
    let mut history = Vec::with_capacity(config.iterations);

    for _ in 0..config.iterations {
        // velocity/position update; RNG order fixed by the particle loop
        for i in 0..config.swarm_size {
            for d in 0..dim {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let v = config.inertia * velocities[i][d]
                    + config.cognitive * r1 * (personal_best[i][d] - positions[i][d])
                    + config.social * r2 * (global_best[d] - positions[i][d]);
                velocities[i][d] = v.clamp(-v_max[d], v_max[d]);
                positions[i][d] += velocities[i][d];
                let (lo, hi) = config.bounds[d];
                reflect(&mut positions[i][d], &mut velocities[i][d], lo, hi);
            }
        }
        let costs: Vec<f64> = positions.par_iter().map(|p| sanitize(cost(p))).collect();
        for i in 0..config.swarm_size {
            if costs[i] < personal_cost[i] {
                personal_cost[i] = costs[i];
                personal_best[i] = positions[i].clone();
            }
            if costs[i] < global_cost {
                global_cost = costs[i];
                global_best = positions[i].clone();
            }
        }
        history.push(global_cost);
    }

    if !global_cost.is_finite() {
        return Err(Error::Identification(
            "every particle was infeasible for the whole run".into(),
        ));
    }
    Ok(IdentResult {
        best_position: global_best,
        best_cost: global_cost,
        cost_history: history,
    })
}
