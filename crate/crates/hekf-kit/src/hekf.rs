//! The hybrid filter: soft-sensor predictions enter the correction step as
//! additional measurements whose covariance is inflated as the confidence in
//! the network drops.
//!
//! The same machinery drives the model-based baseline (yaw-rate measurement
//! only) and the hybrid filter (yaw rate plus five soft measurements).

use nalgebra::{DMatrix, DVector};

use crate::confidence::ConfidenceModel;
use crate::ekf::{
    correct, predict, CovarianceUpdate, GaussianBelief, NoiseConfig, TransitionModel,
};
use crate::error::{Error, Result};
use crate::harness::ManeuverDataset;
use crate::narx::{SoftSensorBank, SoftSensorStream, SOFT_OUTPUT_DIM};
use crate::params::VehicleParams;
use crate::vehicle::{discretize_step, idx, MeasurementMode, ModelInput, AUG_DIM};

/// Default inflation factor `c`: soft measurements are effectively ignored at
/// zero confidence while `R_k` stays finite.
pub const DEFAULT_ZERO_CONFIDENCE_INFLATION: f64 = 1e4;

/// Discrete-time transition of the augmented state: the ten dynamic states
/// advance through the vehicle model, the steering angle and center-of-gravity
/// random-walk states stay constant in the mean.
#[derive(Debug, Clone)]
pub struct VehicleTransition {
    pub params: VehicleParams,
    pub dt: f64,
}

impl TransitionModel for VehicleTransition {
    fn state_dim(&self) -> usize {
        AUG_DIM
    }

    fn advance(&self, state: &DVector<f64>, input: &DVector<f64>) -> Result<DVector<f64>> {
        let model_input = ModelInput {
            delta1: state[idx::DELTA1],
            vx2: input[0],
            fz2: input[1],
            l_cog: state[idx::LCOG],
        };
        let mut ssm = [0.0; 10];
        for i in 0..10 {
            ssm[i] = state[i];
        }
        let next = discretize_step(&ssm, &model_input, &self.params, self.dt)?;
        let mut out = state.clone();
        for i in 0..10 {
            out[i] = next[i];
        }
        Ok(out)
    }
}

/// Tuning and composition parameters of the hybrid filter.
#[derive(Debug, Clone)]
pub struct HekfConfig {
    /// Covariance inflation at zero confidence (the paper's `c`).
    pub zero_confidence_inflation: f64,
    /// Process covariance (12x12) and baseline measurement covariance (6x6).
    pub noise: NoiseConfig,
    /// Scale the hard yaw-rate channel along with the soft block. The real
    /// sensor's noise does not depend on network confidence, so the default
    /// scales only the soft block; enabling this reproduces the wholesale
    /// scaling of the published mapping.
    pub scale_hard_channel: bool,
    pub covariance_update: CovarianceUpdate,
    /// Physical interval the center-of-gravity state is clamped to after
    /// each correction.
    pub lcog_range: (f64, f64),
    /// Pin the confidence to a constant (tuning and limit experiments).
    pub tau_override: Option<f64>,
}

impl HekfConfig {
    pub fn new(noise: NoiseConfig, params: &VehicleParams) -> Self {
        Self {
            zero_confidence_inflation: DEFAULT_ZERO_CONFIDENCE_INFLATION,
            noise,
            scale_hard_channel: false,
            covariance_update: CovarianceUpdate::Standard,
            lcog_range: (0.5, params.hitch_to_gear_center),
            tau_override: None,
        }
    }
}

/// Default diagonal process covariance per 0.01 s step.
///
/// The random-walk variances of `delta1` and `l_cog` are deliberately small:
/// both states are weakly observable through the yaw rate alone and larger
/// walks let the joint estimate wander.
pub fn default_process_noise() -> DMatrix<f64> {
    let diag = [
        1e-4, 2.5e-5, 1e-4, 2.5e-5, 4e-6, // body states
        2.5e5, 2.5e5, 2.5e5, 2.5e5, 2.5e5, // tire force states (N^2)
        2.5e-5, 1e-6, // delta1 and l_cog random walks
    ];
    DMatrix::from_diagonal(&DVector::from_row_slice(&diag))
}

/// Default baseline measurement covariance of the augmented vector
/// `[psi2_dot, psi1_dot, theta, F_y21, F_y23, delta1]`; the yaw-rate entry
/// comes from the measured static-segment variance.
pub fn default_measurement_noise(yaw_rate_variance: f64) -> DMatrix<f64> {
    let diag = [yaw_rate_variance, 1e-4, 1e-4, 2.5e5, 2.5e5, 1e-4];
    DMatrix::from_diagonal(&DVector::from_row_slice(&diag))
}

/// Initial belief: rest state, mid-range center of gravity, generous
/// covariance.
pub fn initial_belief(params: &VehicleParams) -> GaussianBelief {
    let mut mean = DVector::zeros(AUG_DIM);
    mean[idx::LCOG] = 0.7 * params.hitch_to_gear_center;
    let diag = [
        0.25, 0.04, 0.25, 0.04, 0.04, 4e6, 4e6, 4e6, 4e6, 4e6, 0.01, 1.0,
    ];
    GaussianBelief::new(mean, DMatrix::from_diagonal(&DVector::from_row_slice(&diag)))
}

/// Confidence-scaled measurement covariance `R_k`.
///
/// The scale factor is the quadratic mapping `c (tau - 1)^2 + 1`; it
/// multiplies the soft-measurement block of `R_0` elementwise while the hard
/// yaw-rate entry keeps its sensor-determined value (unless
/// `scale_hard_channel` is set).
pub fn scale_measurement_covariance(
    r0: &DMatrix<f64>,
    tau: f64,
    inflation: f64,
    scale_hard_channel: bool,
) -> Result<DMatrix<f64>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!("confidence {tau} outside [0, 1]")));
    }
    let factor = inflation * (tau - 1.0) * (tau - 1.0) + 1.0;
    let mut r = r0.clone();
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            if scale_hard_channel || (i > 0 && j > 0) {
                r[(i, j)] *= factor;
            }
        }
    }
    Ok(r)
}

/// Per-channel variant for experiments: one confidence per soft channel.
pub fn scale_measurement_covariance_per_channel(
    r0: &DMatrix<f64>,
    taus: &[f64; SOFT_OUTPUT_DIM],
    inflation: f64,
) -> Result<DMatrix<f64>> {
    let mut factors = vec![1.0; r0.nrows()];
    for (i, tau) in taus.iter().enumerate() {
        if !(0.0..=1.0).contains(tau) {
            return Err(Error::Domain(format!("confidence {tau} outside [0, 1]")));
        }
        factors[i + 1] = (inflation * (tau - 1.0) * (tau - 1.0) + 1.0).sqrt();
    }
    let mut r = r0.clone();
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            r[(i, j)] *= factors[i] * factors[j];
        }
    }
    Ok(r)
}

/// One hybrid filter step: posterior belief, soft measurements, confidence.
#[derive(Debug, Clone)]
pub struct HekfStepRecord {
    pub time: f64,
    pub belief: GaussianBelief,
    pub soft_prediction: [f64; SOFT_OUTPUT_DIM],
    pub tau: f64,
    pub confidence_distance: f64,
    pub scaled_r_diagonal: Vec<f64>,
    pub innovation: DVector<f64>,
    pub warm_up: bool,
}

/// Streaming hybrid filter over one maneuver.
pub struct Hekf<'a> {
    transition: VehicleTransition,
    stream: SoftSensorStream<'a>,
    confidence: &'a ConfidenceModel,
    config: HekfConfig,
    output_matrix: DMatrix<f64>,
    belief: GaussianBelief,
    prev_input: Option<DVector<f64>>,
    time: f64,
}

impl<'a> Hekf<'a> {
    pub fn new(
        params: VehicleParams,
        dt: f64,
        bank: &'a SoftSensorBank,
        confidence: &'a ConfidenceModel,
        config: HekfConfig,
    ) -> Result<Self> {
        config.noise.validate()?;
        if config.noise.measurement.nrows() != 1 + SOFT_OUTPUT_DIM {
            return Err(Error::Config(format!(
                "hybrid measurement covariance must be {}x{}",
                1 + SOFT_OUTPUT_DIM,
                1 + SOFT_OUTPUT_DIM
            )));
        }
        if !(config.zero_confidence_inflation > 0.0) {
            return Err(Error::Config("inflation factor c must be positive".into()));
        }
        let belief = initial_belief(&params);
        Ok(Self {
            transition: VehicleTransition { params, dt },
            stream: bank.stream(),
            confidence,
            config,
            output_matrix: MeasurementMode::SoftAugmented.selection_matrix(),
            belief,
            prev_input: None,
            time: 0.0,
        })
    }

    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    /// Process one sensor sample `[v_x2, F_z2, psi2_dot]`.
    ///
    /// Order per step: soft-sensor prediction, confidence, covariance
    /// scaling, model prediction (with the previous input), correction with
    /// the stacked measurement.
    pub fn step(&mut self, sample: [f64; 3]) -> Result<HekfStepRecord> {
        let [vx2, fz2, yaw_rate] = sample;
        let stage = |name: &str, e: Error| Error::Protocol {
            stage: name.into(),
            reason: e.to_string(),
        };

        // (1) soft measurements
        let u_ann = [vx2, fz2, yaw_rate];
        let soft = self
            .stream
            .step(u_ann)
            .map_err(|e| stage("soft-sensor", e))?;

        // (2) confidence; warm-up steps carry none regardless of distance
        let conf = self.confidence.evaluate(&u_ann);
        let mut tau = if soft.warm_up { 0.0 } else { conf.tau };
        if let Some(t) = self.config.tau_override {
            tau = t;
        }

        // (3) scaled measurement covariance
        let r_k = scale_measurement_covariance(
            &self.config.noise.measurement,
            tau,
            self.config.zero_confidence_inflation,
            self.config.scale_hard_channel,
        )
        .map_err(|e| stage("covariance-scaling", e))?;

        // (4) model prediction with the previous input
        if let Some(prev) = &self.prev_input {
            self.belief = predict(
                &self.transition,
                &self.belief,
                prev,
                &self.config.noise.process,
            )
            .map_err(|e| stage("prediction", e))?;
        }
        self.prev_input = Some(DVector::from_row_slice(&[vx2, fz2]));

        // (5) correction with the stacked measurement [psi2_dot, y_ann]
        let mut y = DVector::zeros(1 + SOFT_OUTPUT_DIM);
        y[0] = yaw_rate;
        for (i, v) in soft.values.iter().enumerate() {
            y[i + 1] = *v;
        }
        let prior_mean = self.belief.mean.clone();
        let prior_output = &self.output_matrix * &prior_mean;
        self.belief = correct(
            &self.belief,
            &self.output_matrix,
            &y,
            &r_k,
            self.config.covariance_update,
        )
        .map_err(|e| stage("correction", e))?;

        self.belief.mean[idx::LCOG] = self.belief.mean[idx::LCOG]
            .clamp(self.config.lcog_range.0, self.config.lcog_range.1);
        self.belief.validate().map_err(|e| stage("belief-check", e))?;

        let record = HekfStepRecord {
            time: self.time,
            belief: self.belief.clone(),
            soft_prediction: soft.values,
            tau,
            confidence_distance: conf.distance,
            scaled_r_diagonal: r_k.diagonal().iter().cloned().collect(),
            innovation: y - prior_output,
            warm_up: soft.warm_up,
        };
        self.time += self.transition.dt;
        Ok(record)
    }

    /// Run over a whole maneuver dataset.
    pub fn run(&mut self, dataset: &ManeuverDataset) -> Result<Vec<HekfStepRecord>> {
        dataset.validate()?;
        (0..dataset.len())
            .map(|k| {
                let (vx2, yaw, fz2) = dataset.measurement(k);
                self.step([vx2, fz2, yaw])
            })
            .collect()
    }
}

/// One baseline filter step.
#[derive(Debug, Clone)]
pub struct EkfStepRecord {
    pub time: f64,
    pub belief: GaussianBelief,
    pub innovation: f64,
}

/// Model-based baseline: the same augmented filter corrected with the yaw
/// rate only.
pub fn run_ekf_baseline(
    dataset: &ManeuverDataset,
    params: &VehicleParams,
    process_noise: &DMatrix<f64>,
    yaw_rate_variance: f64,
    lcog_range: (f64, f64),
) -> Result<Vec<EkfStepRecord>> {
    dataset.validate()?;
    let transition = VehicleTransition {
        params: params.clone(),
        dt: dataset.dt,
    };
    let c = MeasurementMode::YawRateOnly.selection_matrix();
    let r = DMatrix::from_element(1, 1, yaw_rate_variance);
    let mut belief = initial_belief(params);
    let mut prev_input: Option<DVector<f64>> = None;
    let mut records = Vec::with_capacity(dataset.len());
    for k in 0..dataset.len() {
        let (vx2, yaw, fz2) = dataset.measurement(k);
        if let Some(prev) = &prev_input {
            belief = predict(&transition, &belief, prev, process_noise)?;
        }
        prev_input = Some(DVector::from_row_slice(&[vx2, fz2]));
        let y = DVector::from_row_slice(&[yaw]);
        let innovation = yaw - belief.mean[idx::R2];
        belief = correct(&belief, &c, &y, &r, CovarianceUpdate::Standard)?;
        belief.mean[idx::LCOG] = belief.mean[idx::LCOG].clamp(lcog_range.0, lcog_range.1);
        belief.validate()?;
        records.push(EkfStepRecord {
            time: k as f64 * dataset.dt,
            belief: belief.clone(),
            innovation,
        });
    }
    Ok(records)
}

/// Lag-1 autocorrelation of a series; the stability check of the tuner.
pub fn lag1_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 3 {
        return 0.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let denom: f64 = series.iter().map(|v| (v - mean) * (v - mean)).sum();
    if denom <= 0.0 {
        return 0.0;
    }
    let num: f64 = series
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum();
    num / denom
}

/// Full-confidence tuning limits, part of the "stable and follows the soft
/// measurements closely" acceptance of a candidate.
pub const TUNE_MAX_LAG1_AUTOCORR: f64 = 0.95;
pub const TUNE_MAX_TRACKING_NMSE: f64 = 0.5;

/// Outcome of the full-confidence covariance tuning.
#[derive(Debug, Clone)]
pub struct TuneReport {
    pub process_scale: f64,
    pub measurement_scale: f64,
    /// Ground-truth RMSE per reported quantity, normalized by the unscaled
    /// template's RMSE.
    pub normalized_rmse: [f64; 4],
    pub yaw_innovation_lag1: f64,
    pub tracking_nmse: [f64; SOFT_OUTPUT_DIM],
}

/// Determine `Q` and `R_0` with every soft measurement available
/// (`tau = 1`): grid search over diagonal scalings of the templates,
/// minimizing the worst-case ground-truth RMSE ratio against the unscaled
/// template, subject to the filter being stable (innovation whiteness) and
/// tracking the soft measurements (bounded tracking NMSE).
pub fn tune_full_confidence(
    template: &HekfConfig,
    params: &VehicleParams,
    bank: &SoftSensorBank,
    confidence: &ConfidenceModel,
    tuning_maneuver: &ManeuverDataset,
    warmup_samples: usize,
) -> Result<(NoiseConfig, TuneReport)> {
    const SCALES: [f64; 5] = [1e-2, 1e-1, 1.0, 1e1, 1e2];
    let mut baseline_rmse: Option<[f64; 4]> = None;
    let mut candidates = Vec::new();

    for &qs in &SCALES {
        for &rs in &SCALES {
            let mut config = template.clone();
            config.noise.process = &template.noise.process * qs;
            config.noise.measurement = &template.noise.measurement * rs;
            config.tau_override = Some(1.0);
            let mut filter = Hekf::new(params.clone(), tuning_maneuver.dt, bank, confidence, config)?;
            let records = match filter.run(tuning_maneuver) {
                Ok(r) => r,
                Err(_) => continue, // unstable candidate
            };
            let metrics = tune_metrics(&records, tuning_maneuver, warmup_samples)?;
            if qs == 1.0 && rs == 1.0 {
                baseline_rmse = Some(metrics.0);
            }
            candidates.push((qs, rs, metrics));
        }
    }

    let baseline = baseline_rmse.ok_or_else(|| {
        Error::Tuning("the unscaled template itself is unstable on the tuning maneuver".into())
    })?;

    let mut best: Option<(f64, f64, [f64; 4], f64, [f64; SOFT_OUTPUT_DIM], f64)> = None;
    for (qs, rs, (rmse4, lag1, tracking)) in candidates {
        if lag1.abs() > TUNE_MAX_LAG1_AUTOCORR {
            continue;
        }
        if tracking.iter().any(|t| *t > TUNE_MAX_TRACKING_NMSE) {
            continue;
        }
        let normalized: [f64; 4] = std::array::from_fn(|i| {
            if baseline[i] > 0.0 {
                rmse4[i] / baseline[i]
            } else {
                1.0
            }
        });
        let objective = normalized.iter().cloned().fold(0.0_f64, f64::max);
        let better = match &best {
            None => true,
            Some(b) => objective < b.5,
        };
        if better {
            best = Some((qs, rs, normalized, lag1, tracking, objective));
        }
    }

    let (qs, rs, normalized, lag1, tracking, _) = best.ok_or_else(|| {
        Error::Tuning("no stable candidate passed the whiteness and tracking checks".into())
    })?;
    let noise = NoiseConfig {
        process: &template.noise.process * qs,
        measurement: &template.noise.measurement * rs,
    };
    Ok((
        noise,
        TuneReport {
            process_scale: qs,
            measurement_scale: rs,
            normalized_rmse: normalized,
            yaw_innovation_lag1: lag1,
            tracking_nmse: tracking,
        },
    ))
}

type TuneMetrics = ([f64; 4], f64, [f64; SOFT_OUTPUT_DIM]);

fn tune_metrics(
    records: &[HekfStepRecord],
    dataset: &ManeuverDataset,
    warmup: usize,
) -> Result<TuneMetrics> {
    use crate::harness::report::{rmse, Quantity};
    let quantity_state = [idx::THETA, idx::FY21, idx::FY23, idx::DELTA1];
    let mut rmse4 = [0.0; 4];
    for (qi, (&st, q)) in quantity_state.iter().zip(Quantity::ALL).enumerate() {
        let est: Vec<f64> = records
            .iter()
            .map(|r| r.belief.mean[st] * q.si_to_report())
            .collect();
        let truth: Vec<f64> = dataset
            .truth_channel(st)
            .iter()
            .map(|v| v * q.si_to_report())
            .collect();
        rmse4[qi] = rmse(&est, &truth, warmup)?;
    }

    let yaw_innovations: Vec<f64> = records[warmup..].iter().map(|r| r.innovation[0]).collect();
    let lag1 = lag1_autocorrelation(&yaw_innovations);

    // posterior soft-channel states vs the soft measurements they track
    let soft_state = [idx::R1, idx::THETA, idx::FY21, idx::FY23, idx::DELTA1];
    let mut tracking = [0.0; SOFT_OUTPUT_DIM];
    for (c, &st) in soft_state.iter().enumerate() {
        let est: Vec<f64> = records[warmup..]
            .iter()
            .map(|r| r.belief.mean[st])
            .collect();
        let ann: Vec<f64> = records[warmup..]
            .iter()
            .map(|r| r.soft_prediction[c])
            .collect();
        tracking[c] = crate::narx::train::nmse(&est, &ann);
    }
    Ok((rmse4, lag1, tracking))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{
        generate_maneuver, LoadingState, ManeuverSpec, SensorNoise, SteeringProfile, TrailerTare,
    };
    use crate::narx::{NarxConfig, Network, TrainedChannel, FEATURE_DIM, SOFT_OUTPUT_NAMES};
    use crate::standardize::Standardizer;
    use rand::SeedableRng;
    use std::sync::Arc;

    fn r0_template(yaw_var: f64) -> DMatrix<f64> {
        default_measurement_noise(yaw_var)
    }

    #[test]
    fn scaling_at_full_confidence_is_identity() {
        let r0 = r0_template(2.5e-5);
        let r = scale_measurement_covariance(&r0, 1.0, 1e4, false).unwrap();
        assert_eq!(r, r0);
    }

    #[test]
    fn scaling_at_zero_confidence_inflates_soft_block() {
        let c = 1e4;
        let r0 = r0_template(2.5e-5);
        let r = scale_measurement_covariance(&r0, 0.0, c, false).unwrap();
        assert_eq!(r[(0, 0)], r0[(0, 0)]); // hard channel untouched
        for i in 1..6 {
            assert_eq!(r[(i, i)], (c + 1.0) * r0[(i, i)]);
        }
        // wholesale variant scales everything
        let r = scale_measurement_covariance(&r0, 0.0, c, true).unwrap();
        assert_eq!(r[(0, 0)], (c + 1.0) * r0[(0, 0)]);
    }

    #[test]
    fn scaling_hand_value() {
        // tau = 0.5, c = 100 -> factor 26
        let r0 = r0_template(1.0);
        let r = scale_measurement_covariance(&r0, 0.5, 100.0, false).unwrap();
        assert!((r[(2, 2)] / r0[(2, 2)] - 26.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_rejects_tau_outside_unit_interval() {
        let r0 = r0_template(1.0);
        assert!(scale_measurement_covariance(&r0, -0.1, 10.0, false).is_err());
        assert!(scale_measurement_covariance(&r0, 1.1, 10.0, false).is_err());
    }

    #[test]
    fn scaling_preserves_positive_semidefiniteness() {
        // R0 with hard/soft cross correlations
        let mut r0 = r0_template(1e-4);
        r0[(0, 1)] = 5e-5;
        r0[(1, 0)] = 5e-5;
        r0[(2, 3)] = 1e-5;
        r0[(3, 2)] = 1e-5;
        let r = scale_measurement_covariance(&r0, 0.3, 1e3, false).unwrap();
        let min_eig = r
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig >= -1e-12);
    }

    #[test]
    fn per_channel_scaling_matches_scalar_when_uniform() {
        let r0 = r0_template(1e-4);
        let scalar = scale_measurement_covariance(&r0, 0.4, 50.0, false).unwrap();
        let per = scale_measurement_covariance_per_channel(&r0, &[0.4; 5], 50.0).unwrap();
        for i in 0..6 {
            assert!((scalar[(i, i)] - per[(i, i)]).abs() <= 1e-12 * scalar[(i, i)].abs());
        }
    }

    fn tiny_bank(standardizer: Arc<Standardizer>) -> SoftSensorBank {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
        let channels = SOFT_OUTPUT_NAMES
            .iter()
            .map(|name| {
                let mut network = Network::init(FEATURE_DIM, &[4], &mut rng);
                for w in &mut network.weights {
                    *w *= 0.3;
                }
                TrainedChannel {
                    name: name.to_string(),
                    config: NarxConfig::new(vec![4]).unwrap(),
                    network,
                    target_mean: 0.0,
                    target_std: if name.starts_with("fy") { 5e3 } else { 0.05 },
                    validation_nmse: 0.0,
                }
            })
            .collect();
        SoftSensorBank::new(standardizer, channels).unwrap()
    }

    fn test_fixture() -> (
        VehicleParams,
        ManeuverDataset,
        SoftSensorBank,
        ConfidenceModel,
    ) {
        let params = VehicleParams::nominal();
        let spec = ManeuverSpec {
            name: "hekf-test".into(),
            steering: SteeringProfile::Sine {
                amplitude: 0.08,
                frequency_hz: 0.25,
            },
            speed: 12.0,
            lead_in: 2.0,
            duration: 10.0,
            loading: LoadingState {
                id: "partial".into(),
                payload_kg: 16_000.0,
                payload_position: 5.6,
            },
            seed: 9,
        };
        let ds =
            generate_maneuver(&spec, &params, TrailerTare::default(), &SensorNoise::default())
                .unwrap();
        let inputs: Vec<Vec<f64>> = (0..ds.len()).map(|k| ds.ann_input(k).to_vec()).collect();
        let standardizer = Arc::new(Standardizer::fit(&inputs).unwrap());
        let bank = tiny_bank(standardizer.clone());
        let confidence = ConfidenceModel::build(&inputs, standardizer, 10, None).unwrap();
        (params, ds, bank, confidence)
    }

    fn hekf_config(params: &VehicleParams) -> HekfConfig {
        HekfConfig::new(
            NoiseConfig {
                process: default_process_noise(),
                measurement: default_measurement_noise(2.5e-5),
            },
            params,
        )
    }

    #[test]
    fn warm_up_steps_have_zero_confidence() {
        let (params, ds, bank, confidence) = test_fixture();
        let config = hekf_config(&params);
        let mut filter = Hekf::new(params, ds.dt, &bank, &confidence, config).unwrap();
        let records = filter.run(&ds).unwrap();
        assert_eq!(records[0].tau, 0.0);
        assert_eq!(records[1].tau, 0.0);
        assert!(records[2].tau > 0.0, "in-distribution sample should carry confidence");
    }

    #[test]
    fn zero_confidence_huge_inflation_matches_pure_ekf() {
        let (params, ds, bank, confidence) = test_fixture();
        let mut config = hekf_config(&params);
        config.tau_override = Some(0.0);
        config.zero_confidence_inflation = 1e9;
        let mut filter =
            Hekf::new(params.clone(), ds.dt, &bank, &confidence, config.clone()).unwrap();
        let records = filter.run(&ds).unwrap();

        let yaw_var = config.noise.measurement[(0, 0)];
        let baseline = run_ekf_baseline(
            &ds,
            &params,
            &config.noise.process,
            yaw_var,
            config.lcog_range,
        )
        .unwrap();

        for state in 0..AUG_DIM {
            let scale = baseline
                .iter()
                .map(|r| r.belief.mean[state].abs())
                .fold(0.0_f64, f64::max)
                .max(1e-8);
            let max_diff = records
                .iter()
                .zip(&baseline)
                .map(|(h, e)| (h.belief.mean[state] - e.belief.mean[state]).abs())
                .fold(0.0_f64, f64::max);
            assert!(
                max_diff / scale < 1e-4,
                "state {state}: relative deviation {}",
                max_diff / scale
            );
        }
    }

    #[test]
    fn full_confidence_tight_noise_tracks_soft_measurements() {
        let (params, ds, bank, confidence) = test_fixture();
        let mut config = hekf_config(&params);
        config.tau_override = Some(1.0);
        for i in 1..6 {
            config.noise.measurement[(i, i)] = 1e-10;
        }
        let mut filter = Hekf::new(params, ds.dt, &bank, &confidence, config).unwrap();
        let records = filter.run(&ds).unwrap();
        let soft_state = [idx::R1, idx::THETA, idx::FY21, idx::FY23, idx::DELTA1];
        for r in records.iter().skip(2) {
            for (c, &st) in soft_state.iter().enumerate() {
                assert!(
                    (r.belief.mean[st] - r.soft_prediction[c]).abs() < 1e-3,
                    "t = {}: channel {c} off by {}",
                    r.time,
                    (r.belief.mean[st] - r.soft_prediction[c]).abs()
                );
            }
        }
    }

    #[test]
    fn posterior_variance_is_monotone_in_confidence() {
        // same prior, two confidences: higher tau must not increase the
        // posterior variance of any soft-measured state
        let (params, ds, bank, confidence) = test_fixture();
        let config = hekf_config(&params);
        let mut filter =
            Hekf::new(params.clone(), ds.dt, &bank, &confidence, config.clone()).unwrap();
        let records = filter.run(&ds).unwrap();
        let c_mat = MeasurementMode::SoftAugmented.selection_matrix();
        let soft_state = [idx::R1, idx::THETA, idx::FY21, idx::FY23, idx::DELTA1];
        for (k, record) in records.iter().enumerate().skip(3).take(40) {
            // rebuild the prior of step k from the previous posterior
            let transition = VehicleTransition {
                params: params.clone(),
                dt: ds.dt,
            };
            let (vx2_prev, _, fz2_prev) = ds.measurement(k - 1);
            let prior = predict(
                &transition,
                &records[k - 1].belief,
                &DVector::from_row_slice(&[vx2_prev, fz2_prev]),
                &config.noise.process,
            )
            .unwrap();
            let (vx2, yaw, fz2) = ds.measurement(k);
            let _ = (vx2, fz2);
            let mut y = DVector::zeros(6);
            y[0] = yaw;
            for (i, v) in record.soft_prediction.iter().enumerate() {
                y[i + 1] = *v;
            }
            let posterior = |tau: f64| {
                let r = scale_measurement_covariance(
                    &config.noise.measurement,
                    tau,
                    config.zero_confidence_inflation,
                    false,
                )
                .unwrap();
                correct(&prior, &c_mat, &y, &r, CovarianceUpdate::Standard).unwrap()
            };
            let low = posterior(0.2);
            let high = posterior(0.8);
            for &st in &soft_state {
                assert!(
                    high.covariance[(st, st)] <= low.covariance[(st, st)] * (1.0 + 1e-9),
                    "step {k}, state {st}"
                );
            }
        }
    }

    #[test]
    fn gain_is_continuous_in_confidence() {
        // posterior-mean change under a small tau perturbation stays within
        // the bound from the gain's sensitivity to R
        let (params, ds, bank, confidence) = test_fixture();
        let config = hekf_config(&params);
        let mut filter =
            Hekf::new(params.clone(), ds.dt, &bank, &confidence, config.clone()).unwrap();
        let records = filter.run(&ds).unwrap();
        let c_mat = MeasurementMode::SoftAugmented.selection_matrix();
        let k = 50;
        let transition = VehicleTransition {
            params: params.clone(),
            dt: ds.dt,
        };
        let (vx2_prev, _, fz2_prev) = ds.measurement(k - 1);
        let prior = predict(
            &transition,
            &records[k - 1].belief,
            &DVector::from_row_slice(&[vx2_prev, fz2_prev]),
            &config.noise.process,
        )
        .unwrap();
        let (_, yaw, _) = ds.measurement(k);
        let mut y = DVector::zeros(6);
        y[0] = yaw;
        for (i, v) in records[k].soft_prediction.iter().enumerate() {
            y[i + 1] = *v;
        }
        let innovation = &y - &c_mat * &prior.mean;
        let eps = 1e-4;
        for tau in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let r_a = scale_measurement_covariance(
                &config.noise.measurement,
                tau,
                config.zero_confidence_inflation,
                false,
            )
            .unwrap();
            let r_b = scale_measurement_covariance(
                &config.noise.measurement,
                tau + eps,
                config.zero_confidence_inflation,
                false,
            )
            .unwrap();
            let post_a = correct(&prior, &c_mat, &y, &r_a, CovarianceUpdate::Standard).unwrap();
            let post_b = correct(&prior, &c_mat, &y, &r_b, CovarianceUpdate::Standard).unwrap();
            let mean_delta = (post_a.mean - post_b.mean).norm();

            let pct = &prior.covariance * c_mat.transpose();
            let s_a = &c_mat * &pct + &r_a;
            let s_b = &c_mat * &pct + &r_b;
            let s_a_inv = s_a.try_inverse().unwrap();
            let s_b_inv = s_b.try_inverse().unwrap();
            let dr = &r_b - &r_a;
            // K_a - K_b = P C^T (S_a^{-1} - S_b^{-1}) = P C^T S_a^{-1} dR S_b^{-1}
            let bound = pct.norm() * (s_a_inv * dr * s_b_inv).norm() * innovation.norm();
            assert!(
                mean_delta <= bound * (1.0 + 1e-6) + 1e-12,
                "tau {tau}: delta {mean_delta} exceeds bound {bound}"
            );
        }
    }

    #[test]
    fn full_confidence_equals_augmented_ekf_exactly() {
        let (params, ds, bank, confidence) = test_fixture();
        let mut config = hekf_config(&params);
        config.tau_override = Some(1.0);
        let mut filter =
            Hekf::new(params.clone(), ds.dt, &bank, &confidence, config.clone()).unwrap();
        let records = filter.run(&ds).unwrap();

        // manual augmented-measurement filter with R0 (no scaling)
        let transition = VehicleTransition {
            params: params.clone(),
            dt: ds.dt,
        };
        let c_mat = MeasurementMode::SoftAugmented.selection_matrix();
        let mut belief = initial_belief(&params);
        let mut stream = bank.stream();
        let mut prev: Option<DVector<f64>> = None;
        for (k, record) in records.iter().enumerate() {
            let (vx2, yaw, fz2) = ds.measurement(k);
            let soft = stream.step([vx2, fz2, yaw]).unwrap();
            if let Some(p) = &prev {
                belief = predict(&transition, &belief, p, &config.noise.process).unwrap();
            }
            prev = Some(DVector::from_row_slice(&[vx2, fz2]));
            let mut y = DVector::zeros(6);
            y[0] = yaw;
            for (i, v) in soft.values.iter().enumerate() {
                y[i + 1] = *v;
            }
            belief = correct(
                &belief,
                &c_mat,
                &y,
                &config.noise.measurement,
                CovarianceUpdate::Standard,
            )
            .unwrap();
            belief.mean[idx::LCOG] =
                belief.mean[idx::LCOG].clamp(config.lcog_range.0, config.lcog_range.1);
            assert_eq!(record.belief.mean, belief.mean, "step {k}");
            assert_eq!(record.belief.covariance, belief.covariance, "step {k}");
        }
    }

    /// Train a small single-config bank on one maneuver's truth channels, so
    /// the tuner's trained-bank precondition holds.
    fn quick_trained_bank(ds: &ManeuverDataset) -> (SoftSensorBank, ConfidenceModel) {
        use crate::narx::train::{train_two_phase, Sequence, TrainSettings};
        let inputs_raw: Vec<Vec<f64>> = (0..ds.len()).map(|k| ds.ann_input(k).to_vec()).collect();
        let standardizer = Arc::new(Standardizer::fit(&inputs_raw).unwrap());
        let inputs_std: Vec<[f64; 3]> = inputs_raw
            .iter()
            .map(|r| {
                let v = standardizer.apply_vec(r);
                [v[0], v[1], v[2]]
            })
            .collect();
        let soft_state = [idx::R1, idx::THETA, idx::FY21, idx::FY23, idx::DELTA1];
        let settings = TrainSettings {
            max_closed_loop_epochs: 60,
            ..TrainSettings::default()
        };
        let channels = SOFT_OUTPUT_NAMES
            .iter()
            .zip(soft_state)
            .enumerate()
            .map(|(i, (name, st))| {
                let truth = ds.truth_channel(st);
                let mean = truth.iter().sum::<f64>() / truth.len() as f64;
                let var = truth.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / truth.len() as f64;
                let std = var.sqrt().max(1e-9);
                let seq = Sequence {
                    inputs: inputs_std.clone(),
                    target: truth.iter().map(|v| (v - mean) / std).collect(),
                };
                let (train, val) = seq.split(0.2);
                let config = NarxConfig::new(vec![6]).unwrap();
                let (network, report) =
                    train_two_phase(&config, &[train], &[val], &settings, 500 + i as u64).unwrap();
                TrainedChannel {
                    name: name.to_string(),
                    config,
                    network,
                    target_mean: mean,
                    target_std: std,
                    validation_nmse: report.validation_nmse,
                }
            })
            .collect();
        let bank = SoftSensorBank::new(standardizer.clone(), channels).unwrap();
        let confidence = ConfidenceModel::build(&inputs_raw, standardizer, 10, None).unwrap();
        (bank, confidence)
    }

    #[test]
    fn tuning_is_deterministic_and_not_worse_than_default() {
        let (params, ds, _, _) = test_fixture();
        let (bank, confidence) = quick_trained_bank(&ds);
        let template = hekf_config(&params);
        let (noise_a, report_a) =
            tune_full_confidence(&template, &params, &bank, &confidence, &ds, 200).unwrap();
        let (noise_b, report_b) =
            tune_full_confidence(&template, &params, &bank, &confidence, &ds, 200).unwrap();
        assert_eq!(noise_a.process, noise_b.process);
        assert_eq!(noise_a.measurement, noise_b.measurement);
        assert_eq!(report_a.process_scale, report_b.process_scale);
        // minimax objective: no reported quantity got worse than the template
        for v in report_a.normalized_rmse {
            assert!(v <= 1.0 + 1e-12, "normalized RMSE {v}");
        }
        // re-running with the tuned matrices reproduces the tracking bound
        let mut tuned = template.clone();
        tuned.noise = noise_a;
        tuned.tau_override = Some(1.0);
        let mut filter = Hekf::new(params.clone(), ds.dt, &bank, &confidence, tuned).unwrap();
        let records = filter.run(&ds).unwrap();
        let metrics = tune_metrics(&records, &ds, 200).unwrap();
        for t in metrics.2 {
            assert!(t <= TUNE_MAX_TRACKING_NMSE, "tracking NMSE {t}");
        }
        assert_eq!(report_a.normalized_rmse, report_b.normalized_rmse);
    }
}
