//! RMSE evaluation and the method-comparison report.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Estimation methods compared by the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ekf,
    Ann,
    Hekf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ekf, Method::Ann, Method::Hekf];

    pub fn label(self) -> &'static str {
        match self {
            Method::Ekf => "ekf",
            Method::Ann => "ann",
            Method::Hekf => "hekf",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Method::Ekf => 0,
            Method::Ann => 1,
            Method::Hekf => 2,
        }
    }
}

/// Reported quantities with their table units: angles in rad, forces in kN.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Theta,
    Fy21,
    Fy23,
    Delta1,
}

impl Quantity {
    pub const ALL: [Quantity; 4] = [Quantity::Theta, Quantity::Fy21, Quantity::Fy23, Quantity::Delta1];

    pub fn label(self) -> &'static str {
        match self {
            Quantity::Theta => "theta_rad",
            Quantity::Fy21 => "fy21_kn",
            Quantity::Fy23 => "fy23_kn",
            Quantity::Delta1 => "delta1_rad",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Quantity::Theta => 0,
            Quantity::Fy21 => 1,
            Quantity::Fy23 => 2,
            Quantity::Delta1 => 3,
        }
    }

    /// Scale from SI units to the report unit (N -> kN for forces).
    pub fn si_to_report(self) -> f64 {
        match self {
            Quantity::Fy21 | Quantity::Fy23 => 1e-3,
            _ => 1.0,
        }
    }
}

/// Root-mean-square error between aligned series, excluding the first
/// `warmup` samples.
pub fn rmse(estimates: &[f64], truth: &[f64], warmup: usize) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::Config(format!(
            "misaligned series: {} estimates vs {} truth samples",
            estimates.len(),
            truth.len()
        )));
    }
    if warmup >= estimates.len() {
        return Err(Error::Config("warm-up exclusion leaves no samples".into()));
    }
    let n = estimates.len() - warmup;
    let sum: f64 = estimates[warmup..]
        .iter()
        .zip(&truth[warmup..])
        .map(|(e, t)| (e - t) * (e - t))
        .sum();
    Ok((sum / n as f64).sqrt())
}

/// Per-method, per-quantity RMSE over every evaluation maneuver plus the mean
/// row, mirroring the comparison-table layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseReport {
    pub maneuvers: Vec<String>,
    /// `values[maneuver][method][quantity]`, report units.
    pub values: Vec<[[f64; 4]; 3]>,
}

impl RmseReport {
    pub fn new(maneuvers: Vec<String>, values: Vec<[[f64; 4]; 3]>) -> Result<Self> {
        if maneuvers.len() != values.len() {
            return Err(Error::Config("report rows do not match maneuver names".into()));
        }
        if values
            .iter()
            .flat_map(|m| m.iter().flat_map(|q| q.iter()))
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::Config("RMSE entries must be non-negative".into()));
        }
        Ok(Self { maneuvers, values })
    }

    pub fn value(&self, maneuver: usize, method: Method, quantity: Quantity) -> f64 {
        self.values[maneuver][method.index()][quantity.index()]
    }

    /// Mean RMSE over all maneuvers.
    pub fn mean(&self, method: Method, quantity: Quantity) -> f64 {
        let sum: f64 = self
            .values
            .iter()
            .map(|m| m[method.index()][quantity.index()])
            .sum();
        sum / self.values.len() as f64
    }

    /// Mean error per method and quantity normalized by the worst method,
    /// the bar-chart companion of the table.
    pub fn relative_summary(&self) -> RelativeErrorSummary {
        let mut rel = [[0.0; 4]; 3];
        for q in Quantity::ALL {
            let worst = Method::ALL
                .iter()
                .map(|m| self.mean(*m, q))
                .fold(0.0_f64, f64::max);
            for m in Method::ALL {
                rel[m.index()][q.index()] = if worst > 0.0 {
                    self.mean(m, q) / worst
                } else {
                    0.0
                };
            }
        }
        RelativeErrorSummary { relative: rel }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("maneuver");
        for m in Method::ALL {
            for q in Quantity::ALL {
                let _ = write!(out, ",{}_{}", m.label(), q.label());
            }
        }
        out.push('\n');
        let mut rows: Vec<(String, [[f64; 4]; 3])> = self
            .maneuvers
            .iter()
            .cloned()
            .zip(self.values.iter().cloned())
            .collect();
        let mut mean_row = [[0.0; 4]; 3];
        for m in Method::ALL {
            for q in Quantity::ALL {
                mean_row[m.index()][q.index()] = self.mean(m, q);
            }
        }
        rows.push(("mean".into(), mean_row));
        for (name, row) in rows {
            let _ = write!(out, "{name}");
            for m in Method::ALL {
                for q in Quantity::ALL {
                    let _ = write!(out, ",{:.9e}", row[m.index()][q.index()]);
                }
            }
            out.push('\n');
        }
        out
    }

    /// Human-readable aligned table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<18} {:>6} {:>12} {:>12} {:>12} {:>12}",
            "maneuver", "method", "theta[rad]", "fy21[kN]", "fy23[kN]", "delta1[rad]"
        );
        let mut rows: Vec<(String, [[f64; 4]; 3])> = self
            .maneuvers
            .iter()
            .cloned()
            .zip(self.values.iter().cloned())
            .collect();
        let mut mean_row = [[0.0; 4]; 3];
        for m in Method::ALL {
            for q in Quantity::ALL {
                mean_row[m.index()][q.index()] = self.mean(m, q);
            }
        }
        rows.push(("mean".into(), mean_row));
        for (name, row) in rows {
            for m in Method::ALL {
                let r = row[m.index()];
                let _ = writeln!(
                    out,
                    "{:<18} {:>6} {:>12.4} {:>12.3} {:>12.3} {:>12.4}",
                    name,
                    m.label(),
                    r[0],
                    r[1],
                    r[2],
                    r[3]
                );
            }
        }
        out
    }
}

/// Relative mean errors, normalized per quantity by the worst method.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeErrorSummary {
    /// `relative[method][quantity]` in [0, 1].
    pub relative: [[f64; 4]; 3],
}

impl RelativeErrorSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method");
        for q in Quantity::ALL {
            let _ = write!(out, ",{}", q.label());
        }
        out.push('\n');
        for m in Method::ALL {
            let _ = write!(out, "{}", m.label());
            for q in Quantity::ALL {
                let _ = write!(out, ",{:.6}", self.relative[m.index()][q.index()]);
            }
            out.push('\n');
        }
        out
    }
}
