//! Recurrent soft sensor: per-output networks with exogenous-input and
//! output-feedback delay lines.
//!
//! Each of the five estimated channels gets its own small tanh network fed
//! with the current and two delayed inputs `[v_x2, F_z2, psi2_dot]` plus its
//! own two delayed predictions. Training runs one teacher-forced epoch
//! followed by closed-loop refinement; see [`train`].

mod net;
pub mod train;

pub use net::Network;

use std::path::Path;
use std::sync::Arc;

use crate::confidence::{ConfidenceModel, ConfidenceModelData};
use crate::error::{Error, Result};
use crate::standardize::Standardizer;

/// Exogenous input channels of the soft sensor: `[v_x2, F_z2, psi2_dot]`.
pub const ANN_INPUT_DIM: usize = 3;
/// Estimated channels: `[psi1_dot, theta, F_y21, F_y23, delta1]`.
pub const SOFT_OUTPUT_DIM: usize = 5;
pub const SOFT_OUTPUT_NAMES: [&str; SOFT_OUTPUT_DIM] =
    ["psi1_dot", "theta", "fy21", "fy23", "delta1"];

/// Number of delayed input and feedback samples.
pub const INPUT_DELAYS: usize = 2;
pub const FEEDBACK_DELAYS: usize = 2;

/// Feature vector length: current + delayed inputs, delayed outputs.
pub const FEATURE_DIM: usize = ANN_INPUT_DIM * (1 + INPUT_DELAYS) + FEEDBACK_DELAYS;

/// Architecture of one per-output network.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NarxConfig {
    /// Hidden layer widths; 1 to 3 layers, at most 30 neurons in total.
    pub hidden: Vec<usize>,
}

impl NarxConfig {
    pub fn new(hidden: Vec<usize>) -> Result<Self> {
        let config = Self { hidden };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.len() > 3 {
            return Err(Error::Config(format!(
                "hidden layer count must be 1 to 3, got {}",
                self.hidden.len()
            )));
        }
        let total: usize = self.hidden.iter().sum();
        if total == 0 || total > 30 {
            return Err(Error::Config(format!(
                "total neuron count must be 1 to 30, got {total}"
            )));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layers must be non-empty".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        Network::param_count(FEATURE_DIM, &self.hidden)
    }
}

/// One trained output channel.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainedChannel {
    pub name: String,
    pub config: NarxConfig,
    pub network: Network,
    /// Standardization statistics of the target channel.
    pub target_mean: f64,
    pub target_std: f64,
    /// Closed-loop validation NMSE reached in training.
    pub validation_nmse: f64,
}

/// Five trained networks with the shared input standardizer.
#[derive(Debug, Clone)]
pub struct SoftSensorBank {
    input_standardizer: Arc<Standardizer>,
    channels: Vec<TrainedChannel>,
}

impl SoftSensorBank {
    pub fn new(input_standardizer: Arc<Standardizer>, channels: Vec<TrainedChannel>) -> Result<Self> {
        if channels.len() != SOFT_OUTPUT_DIM {
            return Err(Error::Config(format!(
                "soft sensor bank needs {SOFT_OUTPUT_DIM} channels, got {}",
                channels.len()
            )));
        }
        if input_standardizer.dim() != ANN_INPUT_DIM {
            return Err(Error::Config(format!(
                "input standardizer must cover {ANN_INPUT_DIM} channels"
            )));
        }
        for ch in &channels {
            ch.network.validate()?;
            if ch.network.input_dim != FEATURE_DIM {
                return Err(Error::Config(format!(
                    "channel {} network input dimension {} != {FEATURE_DIM}",
                    ch.name, ch.network.input_dim
                )));
            }
            if !(ch.target_std > 0.0) {
                return Err(Error::Config(format!(
                    "channel {} target spread must be positive",
                    ch.name
                )));
            }
        }
        Ok(Self {
            input_standardizer,
            channels,
        })
    }

    pub fn input_standardizer(&self) -> &Arc<Standardizer> {
        &self.input_standardizer
    }

    pub fn channels(&self) -> &[TrainedChannel] {
        &self.channels
    }

    pub fn stream(&self) -> SoftSensorStream<'_> {
        SoftSensorStream {
            bank: self,
            u_hist: [[0.0; ANN_INPUT_DIM]; 1 + INPUT_DELAYS],
            y_hist: [[0.0; FEEDBACK_DELAYS]; SOFT_OUTPUT_DIM],
            steps: 0,
        }
    }

    /// Closed-loop prediction over a whole input sequence (SI units).
    pub fn predict_sequence(&self, inputs: &[[f64; ANN_INPUT_DIM]]) -> Result<Vec<SoftPrediction>> {
        let mut stream = self.stream();
        inputs.iter().map(|u| stream.step(*u)).collect()
    }
}

/// One soft-sensor prediction in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftPrediction {
    pub values: [f64; SOFT_OUTPUT_DIM],
    /// True while the delay lines are still zero-padded (first two steps);
    /// such samples carry no confidence and are excluded from error metrics.
    pub warm_up: bool,
}

/// Streaming state of the bank: input window plus per-network feedback.
#[derive(Debug, Clone)]
pub struct SoftSensorStream<'a> {
    bank: &'a SoftSensorBank,
    /// Standardized inputs, most recent first.
    u_hist: [[f64; ANN_INPUT_DIM]; 1 + INPUT_DELAYS],
    /// Standardized own predictions per channel, most recent first.
    y_hist: [[f64; FEEDBACK_DELAYS]; SOFT_OUTPUT_DIM],
    steps: usize,
}

impl SoftSensorStream<'_> {
    /// Advance every network one step and de-standardize the outputs.
    pub fn step(&mut self, u_raw: [f64; ANN_INPUT_DIM]) -> Result<SoftPrediction> {
        let mut u_std = [0.0; ANN_INPUT_DIM];
        self.bank.input_standardizer.apply(&u_raw, &mut u_std);
        self.u_hist.rotate_right(1);
        self.u_hist[0] = u_std;

        let warm_up = self.steps < INPUT_DELAYS.max(FEEDBACK_DELAYS);
        let mut values = [0.0; SOFT_OUTPUT_DIM];
        let mut new_feedback = [0.0; SOFT_OUTPUT_DIM];
        for (c, channel) in self.bank.channels.iter().enumerate() {
            let features = assemble_features(&self.u_hist, &self.y_hist[c]);
            let y_std = channel.network.forward(&features)?;
            if !y_std.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite soft-sensor output on channel {}",
                    channel.name
                )));
            }
            new_feedback[c] = y_std;
            values[c] = y_std * channel.target_std + channel.target_mean;
        }
        for (hist, y) in self.y_hist.iter_mut().zip(new_feedback) {
            hist.rotate_right(1);
            hist[0] = y;
        }
        self.steps += 1;
        Ok(SoftPrediction { values, warm_up })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Feature layout shared by training and streaming:
/// `[u_k, u_{k-1}, u_{k-2}, y_{k-1}, y_{k-2}]`, all standardized.
pub(crate) fn assemble_features(
    u_hist: &[[f64; ANN_INPUT_DIM]; 1 + INPUT_DELAYS],
    y_hist: &[f64; FEEDBACK_DELAYS],
) -> [f64; FEATURE_DIM] {
    let mut f = [0.0; FEATURE_DIM];
    for (tap, u) in u_hist.iter().enumerate() {
        f[tap * ANN_INPUT_DIM..(tap + 1) * ANN_INPUT_DIM].copy_from_slice(u);
    }
    f[ANN_INPUT_DIM * (1 + INPUT_DELAYS)..].copy_from_slice(y_hist);
    f
}

/// On-disk soft-sensor file: bank and confidence model together.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct SensorFile {
    pub version: u32,
    pub input_standardizer: Standardizer,
    pub channels: Vec<TrainedChannel>,
    pub confidence: ConfidenceModelData,
}

pub const SENSOR_FILE_VERSION: u32 = 1;

pub fn save_sensor_file(
    path: impl AsRef<Path>,
    bank: &SoftSensorBank,
    confidence: &ConfidenceModel,
) -> Result<()> {
    let file = SensorFile {
        version: SENSOR_FILE_VERSION,
        input_standardizer: (**bank.input_standardizer()).clone(),
        channels: bank.channels.clone(),
        confidence: confidence.to_data(),
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| Error::Config(format!("cannot serialize sensor file: {e}")))?;
    std::fs::write(path.as_ref(), json).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn load_sensor_file(path: impl AsRef<Path>) -> Result<(SoftSensorBank, ConfidenceModel)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SensorFile = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("cannot parse sensor file {}: {e}", path.display())))?;
    if file.version != SENSOR_FILE_VERSION {
        return Err(Error::Config(format!(
            "unsupported sensor file version {} (expected {SENSOR_FILE_VERSION})",
            file.version
        )));
    }
    let confidence = ConfidenceModel::from_data(file.confidence)?;
    // The bank shares the standardizer object with the confidence model.
    let bank = SoftSensorBank::new(confidence.standardizer().clone(), file.channels)?;
    Ok((bank, confidence))
}
