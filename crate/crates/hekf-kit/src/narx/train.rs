//! Two-phase soft-sensor training and architecture search.
//!
//! Phase one runs a single teacher-forced epoch: the feedback taps are filled
//! with ground-truth outputs. Phase two refines in closed loop: each epoch
//! simulates the network over the training sequences to regenerate its own
//! feedback features, then takes one damped Gauss-Newton step with the
//! features held fixed. Early stopping tracks the closed-loop validation NMSE
//! and returns the best snapshot.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rayon::prelude::*;

use super::{
    assemble_features, NarxConfig, Network, ANN_INPUT_DIM, FEATURE_DIM, FEEDBACK_DELAYS,
    INPUT_DELAYS,
};
use crate::error::{Error, Result};

/// Optimizer and schedule settings.
#[derive(Debug, Clone)]
pub struct TrainSettings {
    /// Hard cap on closed-loop epochs.
    pub max_closed_loop_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// L2 regularization weight (on the mean-squared objective).
    pub l2: f64,
    /// L2 candidates scored on validation for the selected architecture.
    pub l2_candidates: Vec<f64>,
    /// Random restarts per candidate; the best validation NMSE wins.
    pub restarts: u64,
    /// Gradient accumulation is strided down to at most this many samples.
    pub max_gradient_samples: usize,
    /// Training fails if validation NMSE exceeds this multiple of its
    /// post-open-loop value.
    pub divergence_factor: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            max_closed_loop_epochs: 1000,
            patience: 25,
            l2: 1e-6,
            l2_candidates: vec![1e-6, 1e-4, 1e-2],
            restarts: 2,
            max_gradient_samples: 4000,
            divergence_factor: 10.0,
        }
    }
}

/// One standardized time series of inputs and a scalar target.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub inputs: Vec<[f64; ANN_INPUT_DIM]>,
    pub target: Vec<f64>,
}

impl Sequence {
    fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.target.len() {
            return Err(Error::Config("sequence input/target length mismatch".into()));
        }
        if self.inputs.len() <= INPUT_DELAYS.max(FEEDBACK_DELAYS) + 1 {
            return Err(Error::Config("sequence too short for the delay lines".into()));
        }
        Ok(())
    }

    /// Split off the trailing fraction as a time-contiguous validation part.
    pub fn split(&self, validation_fraction: f64) -> (Sequence, Sequence) {
        let n = self.inputs.len();
        let cut = ((n as f64) * (1.0 - validation_fraction)).round() as usize;
        let cut = cut.clamp(4, n.saturating_sub(4).max(4));
        (
            Sequence {
                inputs: self.inputs[..cut].to_vec(),
                target: self.target[..cut].to_vec(),
            },
            Sequence {
                inputs: self.inputs[cut..].to_vec(),
                target: self.target[cut..].to_vec(),
            },
        )
    }
}

/// Simulate a network over one sequence in closed loop (standardized space).
pub fn simulate_closed_loop(net: &Network, seq: &Sequence) -> Result<Vec<f64>> {
    let mut u_hist = [[0.0; ANN_INPUT_DIM]; 1 + INPUT_DELAYS];
    let mut y_hist = [0.0; FEEDBACK_DELAYS];
    let mut out = Vec::with_capacity(seq.inputs.len());
    for u in &seq.inputs {
        u_hist.rotate_right(1);
        u_hist[0] = *u;
        let features = assemble_features(&u_hist, &y_hist);
        let y = net.forward(&features)?;
        if !y.is_finite() {
            return Err(Error::Training("non-finite closed-loop output".into()));
        }
        y_hist.rotate_right(1);
        y_hist[0] = y;
        out.push(y);
    }
    Ok(out)
}

/// Normalized mean squared error against the target's variance.
pub fn nmse(predictions: &[f64], target: &[f64]) -> f64 {
    assert_eq!(predictions.len(), target.len());
    let n = target.len() as f64;
    let mean = target.iter().sum::<f64>() / n;
    let denom: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    let num: f64 = predictions
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    if denom > 0.0 {
        num / denom
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Closed-loop validation NMSE over several sequences, excluding the
/// warm-up samples at the head of each sequence.
pub fn validation_nmse(net: &Network, sequences: &[Sequence]) -> Result<f64> {
    let warm = INPUT_DELAYS.max(FEEDBACK_DELAYS);
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for seq in sequences {
        let sim = simulate_closed_loop(net, seq)?;
        preds.extend_from_slice(&sim[warm..]);
        targets.extend_from_slice(&seq.target[warm..]);
    }
    Ok(nmse(&preds, &targets))
}

/// Feature/target pairs of one epoch, with warm-up samples dropped.
struct EpochData {
    features: Vec<[f64; FEATURE_DIM]>,
    targets: Vec<f64>,
}

fn teacher_forced_data(sequences: &[Sequence]) -> EpochData {
    let warm = INPUT_DELAYS.max(FEEDBACK_DELAYS);
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for seq in sequences {
        let mut u_hist = [[0.0; ANN_INPUT_DIM]; 1 + INPUT_DELAYS];
        let mut y_hist = [0.0; FEEDBACK_DELAYS];
        for (k, u) in seq.inputs.iter().enumerate() {
            u_hist.rotate_right(1);
            u_hist[0] = *u;
            if k >= warm {
                features.push(assemble_features(&u_hist, &y_hist));
                targets.push(seq.target[k]);
            }
            y_hist.rotate_right(1);
            y_hist[0] = seq.target[k];
        }
    }
    EpochData { features, targets }
}

/// Closed-loop loss: simulate and compare, plus L2 regularization.
fn closed_loop_loss(net: &Network, sequences: &[Sequence], l2: f64) -> Result<f64> {
    let warm = INPUT_DELAYS.max(FEEDBACK_DELAYS);
    let mut sum = 0.0;
    let mut count = 0usize;
    for seq in sequences {
        let sim = simulate_closed_loop(net, seq)?;
        for k in warm..seq.target.len() {
            let r = sim[k] - seq.target[k];
            sum += r * r;
        }
        count += seq.target.len() - warm;
    }
    let reg: f64 = net.weights.iter().map(|w| w * w).sum();
    Ok(sum / count as f64 + l2 * reg)
}

/// Closed-loop normal equations with dynamic gradients: the Jacobian of each
/// residual is backpropagated through the output-feedback recursion
/// `dy_k/dw = ∂y_k/∂w + Σ_j ∂y_k/∂y_{k-j} dy_{k-j}/dw`.
fn closed_loop_normal_equations(
    net: &Network,
    sequences: &[Sequence],
    max_grad: usize,
) -> Result<(DMatrix<f64>, DVector<f64>, usize)> {
    let warm = INPUT_DELAYS.max(FEEDBACK_DELAYS);
    let w = net.n_params();
    let total: usize = sequences
        .iter()
        .map(|s| s.target.len().saturating_sub(warm))
        .sum();
    let stride = total.div_ceil(max_grad).max(1);

    let mut h = DMatrix::<f64>::zeros(w, w);
    let mut b = DVector::<f64>::zeros(w);
    let mut used = 0usize;
    let fb_base = ANN_INPUT_DIM * (1 + INPUT_DELAYS);

    let mut static_grad = DVector::<f64>::zeros(w);
    let mut input_grad = [0.0; FEATURE_DIM];
    for seq in sequences {
        let mut u_hist = [[0.0; ANN_INPUT_DIM]; 1 + INPUT_DELAYS];
        let mut y_hist = [0.0; FEEDBACK_DELAYS];
        let mut grad_hist: Vec<DVector<f64>> =
            (0..FEEDBACK_DELAYS).map(|_| DVector::zeros(w)).collect();
        for (k, u) in seq.inputs.iter().enumerate() {
            u_hist.rotate_right(1);
            u_hist[0] = *u;
            let features = assemble_features(&u_hist, &y_hist);
            let y = net.forward_with_gradients(&features, &mut static_grad, Some(&mut input_grad))?;
            if !y.is_finite() {
                return Err(Error::Training("non-finite closed-loop output".into()));
            }
            // total derivative through the feedback taps
            let mut total_grad = static_grad.clone();
            for (j, g) in grad_hist.iter().enumerate() {
                total_grad.axpy(input_grad[fb_base + j], g, 1.0);
            }
            if k >= warm && (k - warm) % stride == 0 {
                let r = y - seq.target[k];
                h.ger(1.0, &total_grad, &total_grad, 1.0);
                b.axpy(r, &total_grad, 1.0);
                used += 1;
            }
            y_hist.rotate_right(1);
            y_hist[0] = y;
            grad_hist.rotate_right(1);
            grad_hist[0] = total_grad;
        }
    }
    if used == 0 {
        return Err(Error::Training("empty closed-loop training epoch".into()));
    }
    let n = used as f64;
    h /= n;
    b /= n;
    Ok((h, b, used))
}

/// One damped Gauss-Newton update on the closed-loop objective; candidate
/// steps are scored by full closed-loop resimulation.
fn lm_epoch_closed_loop(
    net: &mut Network,
    sequences: &[Sequence],
    l2: f64,
    mu: &mut f64,
    max_grad: usize,
) -> Result<f64> {
    let w = net.n_params();
    let (mut h, mut g, _) = closed_loop_normal_equations(net, sequences, max_grad)?;
    for i in 0..w {
        h[(i, i)] += l2;
        g[i] += l2 * net.weights[i];
    }
    let loss_before = closed_loop_loss(net, sequences, l2)?;
    if !loss_before.is_finite() {
        return Err(Error::Training("non-finite training loss".into()));
    }
    let mut damped = h.clone();
    for _ in 0..12 {
        for i in 0..w {
            damped[(i, i)] = h[(i, i)] + *mu;
        }
        if let Some(step) = damped.clone().lu().solve(&(-&g)) {
            let mut candidate = net.clone();
            for (wv, s) in candidate.weights.iter_mut().zip(step.iter()) {
                *wv += s;
            }
            if let Ok(loss_after) = closed_loop_loss(&candidate, sequences, l2) {
                if loss_after.is_finite() && loss_after < loss_before {
                    *net = candidate;
                    *mu = (*mu * 0.3).max(1e-12);
                    return Ok(loss_after);
                }
            }
        }
        *mu *= 4.0;
    }
    Ok(loss_before)
}

/// Regularized mean-squared loss over a full epoch data set.
fn full_loss(net: &Network, data: &EpochData, l2: f64) -> Result<f64> {
    let mut sum = 0.0;
    for (f, t) in data.features.iter().zip(&data.targets) {
        let r = net.forward(f)? - t;
        sum += r * r;
    }
    let reg: f64 = net.weights.iter().map(|w| w * w).sum();
    Ok(sum / data.targets.len() as f64 + l2 * reg)
}

/// One damped Gauss-Newton update: build the normal equations on a strided
/// sample subset, accept the step only if the full regularized loss drops.
/// Returns the loss after the epoch.
fn lm_epoch(net: &mut Network, data: &EpochData, l2: f64, mu: &mut f64, max_grad: usize) -> Result<f64> {
    let n = data.targets.len();
    if n == 0 {
        return Err(Error::Training("empty training epoch".into()));
    }
    let stride = n.div_ceil(max_grad);
    let idx: Vec<usize> = (0..n).step_by(stride).collect();
    let n_g = idx.len() as f64;

    let w = net.n_params();
    let mut h = DMatrix::<f64>::zeros(w, w);
    let mut g = DVector::<f64>::zeros(w);
    let mut grad = DVector::<f64>::zeros(w);
    for &i in &idx {
        let y = net.forward_with_gradient(&data.features[i], &mut grad)?;
        let r = y - data.targets[i];
        if !r.is_finite() {
            return Err(Error::Training("non-finite training residual".into()));
        }
        h.ger(1.0 / n_g, &grad, &grad, 1.0);
        g.axpy(r / n_g, &grad, 1.0);
    }
    for i in 0..w {
        h[(i, i)] += l2;
        g[i] += l2 * net.weights[i];
    }

    let loss_before = full_loss(net, data, l2)?;
    if !loss_before.is_finite() {
        return Err(Error::Training("non-finite training loss".into()));
    }
    let mut damped = h.clone();
    for _ in 0..12 {
        for i in 0..w {
            damped[(i, i)] = h[(i, i)] + *mu;
        }
        if let Some(step) = damped.clone().lu().solve(&(-&g)) {
            let mut candidate = net.clone();
            for (wv, s) in candidate.weights.iter_mut().zip(step.iter()) {
                *wv += s;
            }
            let loss_after = full_loss(&candidate, data, l2)?;
            if loss_after.is_finite() && loss_after < loss_before {
                *net = candidate;
                *mu = (*mu * 0.3).max(1e-12);
                return Ok(loss_after);
            }
        }
        *mu *= 4.0;
    }
    // No acceptable step; the plateau counter of the caller will handle it.
    Ok(loss_before)
}

/// Report of one two-phase training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub open_loop_loss: f64,
    pub initial_loss: f64,
    pub closed_loop_epochs: usize,
    pub validation_nmse: f64,
}

/// Phase one: exactly one teacher-forced epoch.
pub fn train_open_loop(
    net: &mut Network,
    train: &[Sequence],
    l2: f64,
    max_grad: usize,
) -> Result<(f64, f64)> {
    for seq in train {
        seq.validate()?;
    }
    let data = teacher_forced_data(train);
    let before = full_loss(net, &data, l2)?;
    let mut mu = 1e-2;
    let after = lm_epoch(net, &data, l2, &mut mu, max_grad)?;
    Ok((before, after))
}

/// Phase two: closed-loop refinement with early stopping, starting from an
/// open-loop-initialized network. Returns the best-validation snapshot.
pub fn train_closed_loop(
    net: Network,
    train: &[Sequence],
    validation: &[Sequence],
    settings: &TrainSettings,
) -> Result<(Network, TrainReport)> {
    let mut net = net;
    let initial_val = validation_nmse(&net, validation)?;
    if !initial_val.is_finite() {
        return Err(Error::Training("non-finite initial validation NMSE".into()));
    }
    let mut best = (net.clone(), initial_val);
    let mut mu = 1e-2;
    let mut epochs = 0;
    let mut wait = 0;
    for _ in 0..settings.max_closed_loop_epochs {
        epochs += 1;
        lm_epoch_closed_loop(&mut net, train, settings.l2, &mut mu, settings.max_gradient_samples)?;
        let val = validation_nmse(&net, validation)?;
        if !val.is_finite() || val > settings.divergence_factor * initial_val.max(1e-12) {
            return Err(Error::Training(format!(
                "closed-loop training diverged: validation NMSE {val} (initial {initial_val})"
            )));
        }
        if val < best.1 * (1.0 - 1e-9) {
            best = (net.clone(), val);
            wait = 0;
        } else {
            wait += 1;
            if wait >= settings.patience {
                break;
            }
        }
    }
    let report = TrainReport {
        open_loop_loss: f64::NAN,
        initial_loss: initial_val,
        closed_loop_epochs: epochs,
        validation_nmse: best.1,
    };
    Ok((best.0, report))
}

/// Both phases from a seeded initialization.
pub fn train_two_phase(
    config: &NarxConfig,
    train: &[Sequence],
    validation: &[Sequence],
    settings: &TrainSettings,
    seed: u64,
) -> Result<(Network, TrainReport)> {
    config.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::init(FEATURE_DIM, &config.hidden, &mut rng);
    let (before, after) = train_open_loop(&mut net, train, settings.l2, settings.max_gradient_samples)?;
    let (best, mut report) = train_closed_loop(net, train, validation, settings)?;
    report.open_loop_loss = after;
    report.initial_loss = before;
    Ok((best, report))
}

/// The architecture grid: 1 to 3 layers crossed with total neuron counts
/// `{5, 10, 15, 20, 25, 30}` split as evenly as possible.
pub fn architecture_grid() -> Vec<NarxConfig> {
    let mut grid = Vec::new();
    for layers in 1..=3usize {
        for total in [5usize, 10, 15, 20, 25, 30] {
            let base = total / layers;
            let extra = total % layers;
            let hidden: Vec<usize> = (0..layers)
                .map(|l| base + usize::from(l < extra))
                .collect();
            grid.push(NarxConfig { hidden });
        }
    }
    grid
}

/// Result of the per-channel architecture search.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub config: NarxConfig,
    pub network: Network,
    pub validation_nmse: f64,
    pub l2: f64,
}

fn derive_seed(base: u64, candidate: u64, restart: u64) -> u64 {
    base ^ candidate.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ restart.wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Exhaustive grid search for one output channel; candidates run in parallel
/// and the selection is a deterministic reduction (best validation NMSE, ties
/// to fewer parameters). The selected architecture is retrained once per L2
/// candidate and the best validation NMSE wins.
pub fn grid_search_channel(
    train: &[Sequence],
    validation: &[Sequence],
    settings: &TrainSettings,
    seed: u64,
) -> Result<GridOutcome> {
    let grid = architecture_grid();
    let runs: Vec<(usize, u64)> = (0..grid.len())
        .flat_map(|c| (0..settings.restarts.max(1)).map(move |r| (c, r)))
        .collect();
    let outcomes: Vec<Option<(usize, Network, f64)>> = runs
        .par_iter()
        .map(|&(c, r)| {
            let s = derive_seed(seed, c as u64, r);
            train_two_phase(&grid[c], train, validation, settings, s)
                .ok()
                .map(|(net, report)| (c, net, report.validation_nmse))
        })
        .collect();

    let mut best: Option<(usize, Network, f64)> = None;
    for outcome in outcomes.into_iter().flatten() {
        best = Some(match best {
            None => outcome,
            Some(cur) => {
                let better = outcome.2 < cur.2 * (1.0 - 1e-12)
                    || (relative_tie(outcome.2, cur.2)
                        && grid[outcome.0].param_count() < grid[cur.0].param_count());
                if better {
                    outcome
                } else {
                    cur
                }
            }
        });
    }
    let (c, mut net, mut val) = best.ok_or_else(|| {
        Error::Training("grid search failed: every candidate training run failed".into())
    })?;
    let config = grid[c].clone();
    let mut chosen_l2 = settings.l2;

    for (i, &l2) in settings.l2_candidates.iter().enumerate() {
        if l2 == settings.l2 {
            continue;
        }
        let mut alt = settings.clone();
        alt.l2 = l2;
        if let Ok((n, rep)) = train_two_phase(
            &config,
            train,
            validation,
            &alt,
            derive_seed(seed, c as u64, 1000 + i as u64),
        ) {
            if rep.validation_nmse < val {
                net = n;
                val = rep.validation_nmse;
                chosen_l2 = l2;
            }
        }
    }
    Ok(GridOutcome {
        config,
        network: net,
        validation_nmse: val,
        l2: chosen_l2,
    })
}

fn relative_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}
