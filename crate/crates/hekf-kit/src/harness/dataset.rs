//! Time-indexed maneuver records and their CSV form.
//!
//! One file per maneuver and loading state: `#`-prefixed metadata lines, a
//! header row with the canonical column names, then one row per sample with
//! nine significant digits.

use std::path::Path;

use crate::error::{Error, Result};
use crate::vehicle::{idx, AUG_DIM};

/// Canonical column order.
pub const COLUMNS: [&str; 19] = [
    "time", "vy1", "psi1_dot", "vy2", "psi2_dot", "theta", "fy11", "fy12", "fy21", "fy22",
    "fy23", "delta1", "lcog", "in_delta1", "in_vx2", "in_fz2", "meas_vx2", "meas_psi2dot",
    "meas_fz2",
];

pub const COL_TIME: usize = 0;
/// True augmented-state channels occupy columns 1..=12 in state order.
pub const COL_STATE: usize = 1;
pub const COL_IN_DELTA1: usize = 13;
pub const COL_IN_VX2: usize = 14;
pub const COL_IN_FZ2: usize = 15;
pub const COL_MEAS_VX2: usize = 16;
pub const COL_MEAS_PSI2DOT: usize = 17;
pub const COL_MEAS_FZ2: usize = 18;

pub type Row = [f64; COLUMNS.len()];

/// One maneuver: uniform time base, true states, inputs, noisy measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverDataset {
    pub dt: f64,
    /// Metadata carried as `# key: value` comment lines.
    pub meta: Vec<(String, String)>,
    pub rows: Vec<Row>,
}

impl ManeuverDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// True augmented state (12 channels) at a sample.
    pub fn truth(&self, k: usize) -> [f64; AUG_DIM] {
        let mut out = [0.0; AUG_DIM];
        out.copy_from_slice(&self.rows[k][COL_STATE..COL_STATE + AUG_DIM]);
        out
    }

    /// A whole truth channel by augmented-state index.
    pub fn truth_channel(&self, state_index: usize) -> Vec<f64> {
        assert!(state_index < AUG_DIM);
        self.rows
            .iter()
            .map(|r| r[COL_STATE + state_index])
            .collect()
    }

    /// Noiseless inputs `(delta1, vx2, fz2)`.
    pub fn input(&self, k: usize) -> (f64, f64, f64) {
        let r = &self.rows[k];
        (r[COL_IN_DELTA1], r[COL_IN_VX2], r[COL_IN_FZ2])
    }

    /// Noisy sensor sample `(vx2, psi2_dot, fz2)`.
    pub fn measurement(&self, k: usize) -> (f64, f64, f64) {
        let r = &self.rows[k];
        (r[COL_MEAS_VX2], r[COL_MEAS_PSI2DOT], r[COL_MEAS_FZ2])
    }

    /// Soft-sensor input `[vx2, fz2, psi2_dot]` from the noisy sensors.
    pub fn ann_input(&self, k: usize) -> [f64; 3] {
        let (vx2, yaw, fz2) = self.measurement(k);
        [vx2, fz2, yaw]
    }

    /// True values of the reported quantities `[theta, fy21, fy23, delta1]`.
    pub fn reported_truth(&self, k: usize) -> [f64; 4] {
        let t = self.truth(k);
        [t[idx::THETA], t[idx::FY21], t[idx::FY23], t[idx::DELTA1]]
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.len() < 2 {
            return Err(Error::Config("dataset needs at least two samples".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dataset dt must be positive: {}", self.dt)));
        }
        for (k, row) in self.rows.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("non-finite value in row {k}")));
            }
            let expected = k as f64 * self.dt;
            if (row[COL_TIME] - expected).abs() > 1e-6 * (1.0 + expected.abs()) {
                return Err(Error::Config(format!(
                    "non-uniform time base at row {k}: {} vs {expected}",
                    row[COL_TIME]
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out.push_str(&COLUMNS.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                out.push_str(&format!("{v:.9e}"));
                first = false;
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_csv()).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn from_csv(path: impl AsRef<Path>, text: &str) -> Result<Self> {
        let path = path.as_ref();
        let mut meta = Vec::new();
        let mut rows = Vec::new();
        let mut header_seen = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once(':') {
                    meta.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            if !header_seen {
                let names: Vec<&str> = line.split(',').collect();
                if names != COLUMNS {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        reason: "unexpected dataset header".into(),
                    });
                }
                header_seen = true;
                continue;
            }
            let mut row = [0.0; COLUMNS.len()];
            let mut count = 0;
            for (slot, field) in row.iter_mut().zip(line.split(',')) {
                *slot = field.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("bad number `{field}`"),
                })?;
                count += 1;
            }
            if count != COLUMNS.len() || line.split(',').count() != COLUMNS.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("expected {} fields", COLUMNS.len()),
                });
            }
            rows.push(row);
        }
        if rows.len() < 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                reason: "dataset has fewer than two samples".into(),
            });
        }
        let dt = rows[1][COL_TIME] - rows[0][COL_TIME];
        let ds = ManeuverDataset { dt, meta, rows };
        ds.validate()?;
        Ok(ds)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(path, &text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_dataset() -> ManeuverDataset {
        let mut rows = Vec::new();
        for k in 0..40 {
            let mut row = [0.0; COLUMNS.len()];
            row[COL_TIME] = k as f64 * 0.01;
            for (c, slot) in row.iter_mut().enumerate().skip(1) {
                *slot = ((k * 7 + c * 13) % 100) as f64 * 0.137 - 3.0;
            }
            rows.push(row);
        }
        ManeuverDataset {
            dt: 0.01,
            meta: vec![
                ("maneuver".into(), "test sine".into()),
                ("seed".into(), "42".into()),
            ],
            rows,
        }
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let ds = sample_dataset();
        let text = ds.to_csv();
        let back = ManeuverDataset::from_csv("mem.csv", &text).unwrap();
        assert_eq!(back.meta, ds.meta);
        assert_eq!(back.rows.len(), ds.rows.len());
        for (a, b) in back.rows.iter().zip(&ds.rows) {
            for (x, y) in a.iter().zip(b) {
                let scale = y.abs().max(1e-12);
                assert!((x - y).abs() <= 1e-9 * scale, "{x} vs {y}");
            }
        }
        // a second round trip is byte-identical
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn rejects_bad_header_and_ragged_rows() {
        let ds = sample_dataset();
        let text = ds.to_csv().replace("meas_fz2", "oops");
        assert!(ManeuverDataset::from_csv("mem.csv", &text).is_err());

        let mut text = ds.to_csv();
        text.push_str("1.0,2.0\n");
        assert!(ManeuverDataset::from_csv("mem.csv", &text).is_err());
    }

    #[test]
    fn validates_uniform_time_base() {
        let mut ds = sample_dataset();
        ds.rows[5][COL_TIME] += 0.004;
        assert!(ds.validate().is_err());
    }
}
