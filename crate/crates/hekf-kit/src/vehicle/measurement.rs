//! Measurement models: pure selections of augmented state components.

use nalgebra::{DMatrix, DVector};

use super::{idx, AUG_DIM};

/// Which measurement vector the filter corrects with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementMode {
    /// Model-based baseline: the semitrailer yaw rate only.
    YawRateOnly,
    /// Hybrid filter: yaw rate plus the five soft measurements
    /// `[psi2_dot, psi1_dot, theta, F_y21, F_y23, delta1]`.
    SoftAugmented,
}

impl MeasurementMode {
    pub fn measured_indices(self) -> &'static [usize] {
        match self {
            MeasurementMode::YawRateOnly => &[idx::R2],
            MeasurementMode::SoftAugmented => {
                &[idx::R2, idx::R1, idx::THETA, idx::FY21, idx::FY23, idx::DELTA1]
            }
        }
    }

    pub fn dim(self) -> usize {
        self.measured_indices().len()
    }

    /// Constant selection matrix mapping the augmented state to the
    /// measurement vector; rows are unit vectors.
    pub fn selection_matrix(self) -> DMatrix<f64> {
        let indices = self.measured_indices();
        let mut c = DMatrix::zeros(indices.len(), AUG_DIM);
        for (row, &i) in indices.iter().enumerate() {
            c[(row, i)] = 1.0;
        }
        c
    }

    /// Evaluate the output function on an augmented state.
    pub fn measure(self, state: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.measured_indices().iter().map(|&i| state[i]),
        )
    }
}
