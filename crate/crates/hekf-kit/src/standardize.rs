//! Per-channel standardization shared by the soft sensor and the
//! confidence model.

use crate::error::{Error, Result};

/// Channel-wise mean and standard deviation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fit from rows of equal length. Constant channels are rejected: a zero
    /// spread would make the standardized coordinate undefined.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Config("cannot standardize an empty data set".into()));
        };
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in rows {
            if row.len() != dim {
                return Err(Error::Config("ragged rows in standardizer input".into()));
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut std = vec![0.0; dim];
        for (i, s) in var.iter().enumerate() {
            std[i] = (s / n).sqrt();
            if !(std[i] > 0.0) {
                return Err(Error::Config(format!(
                    "channel {i} is constant; cannot standardize"
                )));
            }
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, raw: &[f64], out: &mut [f64]) {
        for i in 0..self.mean.len() {
            out[i] = (raw[i] - self.mean[i]) / self.std[i];
        }
    }

    pub fn apply_vec(&self, raw: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; raw.len()];
        self.apply(raw, &mut out);
        out
    }

    pub fn invert(&self, standardized: &[f64], out: &mut [f64]) {
        for i in 0..self.mean.len() {
            out[i] = standardized[i] * self.std[i] + self.mean[i];
        }
    }

    /// Standardize a single channel.
    pub fn apply_channel(&self, channel: usize, value: f64) -> f64 {
        (value - self.mean[channel]) / self.std[channel]
    }

    pub fn invert_channel(&self, channel: usize, value: f64) -> f64 {
        value * self.std[channel] + self.mean[channel]
    }
}
