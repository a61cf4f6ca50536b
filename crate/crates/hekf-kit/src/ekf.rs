//! Discrete-time extended Kalman filter with additive Gaussian noise.
//!
//! The filter is generic over the transition model: the vehicle filter and
//! the hybrid filter both drive the same predict/correct machinery, and a
//! linear model reduces it to the textbook Kalman filter exactly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// State mean and error covariance carried between filter steps.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        Self { mean, covariance }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Check symmetry, finiteness, and numerical positive semidefiniteness.
    ///
    /// The eigenvalue floor is relative to the largest eigenvalue magnitude:
    /// state units mix m/s, rad/s, and newtons, so covariance scales span many
    /// orders of magnitude and an absolute floor would be meaningless.
    pub fn validate(&self) -> Result<()> {
        let p = &self.covariance;
        if self.mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite state mean".into()));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite covariance".into()));
        }
        let scale = p.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
        for i in 0..p.nrows() {
            for j in (i + 1)..p.ncols() {
                if (p[(i, j)] - p[(j, i)]).abs() > 1e-9 * scale {
                    return Err(Error::Numerical(format!(
                        "covariance asymmetric at ({i},{j}): {} vs {}",
                        p[(i, j)],
                        p[(j, i)]
                    )));
                }
            }
        }
        let eigs = p.clone().symmetric_eigenvalues();
        let max_eig = eigs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let floor = -1e-10 * max_eig.max(1.0);
        if let Some(min) = eigs.iter().cloned().reduce(f64::min) {
            if min < floor {
                return Err(Error::Numerical(format!(
                    "covariance indefinite: min eigenvalue {min}, floor {floor}"
                )));
            }
        }
        Ok(())
    }
}

/// Process and baseline measurement covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    pub process: DMatrix<f64>,
    pub measurement: DMatrix<f64>,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("Q", &self.process), ("R", &self.measurement)] {
            if m.nrows() != m.ncols() {
                return Err(Error::Config(format!("{name} must be square")));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("{name} has non-finite entries")));
            }
            let scale = m.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1e-300);
            if (m - m.transpose()).amax() > 1e-9 * scale {
                return Err(Error::Config(format!("{name} is not symmetric")));
            }
            let min_eig = m
                .clone()
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .reduce(f64::min)
                .unwrap_or(0.0);
            if min_eig < -1e-10 * scale {
                return Err(Error::Config(format!("{name} is not PSD")));
            }
        }
        Ok(())
    }
}

/// Discrete-time state transition `x_k = f(x_{k-1}, u_{k-1})`.
pub trait TransitionModel {
    fn state_dim(&self) -> usize;

    fn advance(&self, state: &DVector<f64>, input: &DVector<f64>) -> Result<DVector<f64>>;

    /// State Jacobian at the given operating point. The default implementation
    /// uses central finite differences; implementations with closed-form
    /// linearizations can override it.
    fn jacobian(&self, state: &DVector<f64>, input: &DVector<f64>) -> Result<DMatrix<f64>> {
        numeric_jacobian(|x| self.advance(x, input), state, self.state_dim())
    }
}

/// Central-difference Jacobian with per-state step `max(1e-6, 1e-6 |x_i|)`.
pub fn numeric_jacobian<F>(f: F, x: &DVector<f64>, out_dim: usize) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(out_dim, n);
    for i in 0..n {
        let h = 1e-6_f64.max(1e-6 * x[i].abs());
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        let fp = f(&xp)?;
        let fm = f(&xm)?;
        if fp.len() != out_dim || fm.len() != out_dim {
            return Err(Error::Config(format!(
                "jacobian output dimension mismatch: expected {out_dim}"
            )));
        }
        for r in 0..out_dim {
            jac[(r, i)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite jacobian entry".into()));
    }
    Ok(jac)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Prediction step: advance the mean through the model and propagate the
/// covariance as `A P A^T + Q`.
pub fn predict<M: TransitionModel>(
    model: &M,
    belief: &GaussianBelief,
    input: &DVector<f64>,
    process_noise: &DMatrix<f64>,
) -> Result<GaussianBelief> {
    let a = model.jacobian(&belief.mean, input)?;
    let mean = model.advance(&belief.mean, input)?;
    let mut covariance = &a * &belief.covariance * a.transpose() + process_noise;
    symmetrize(&mut covariance);
    let out = GaussianBelief { mean, covariance };
    if out.mean.iter().any(|v| !v.is_finite()) || out.covariance.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite prediction".into()));
    }
    Ok(out)
}

/// How the posterior covariance is formed in the correction step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceUpdate {
    /// `(I - K C) P`, re-symmetrized.
    #[default]
    Standard,
    /// Joseph form `(I - K C) P (I - K C)^T + K R K^T`.
    Joseph,
}

/// Correction step with a linear output map `y = C x + w`.
pub fn correct(
    belief: &GaussianBelief,
    output_matrix: &DMatrix<f64>,
    measurement: &DVector<f64>,
    measurement_noise: &DMatrix<f64>,
    update: CovarianceUpdate,
) -> Result<GaussianBelief> {
    let c = output_matrix;
    let p = &belief.covariance;
    let pct = p * c.transpose();
    let innovation_cov = c * &pct + measurement_noise;
    let lu = innovation_cov.clone().lu();
    let identity = DMatrix::identity(innovation_cov.nrows(), innovation_cov.ncols());
    let inv = lu.solve(&identity).ok_or_else(|| {
        let diag: Vec<f64> = innovation_cov.diagonal().iter().cloned().collect();
        Error::Numerical(format!(
            "singular innovation covariance (diagonal {diag:?})"
        ))
    })?;
    let gain = &pct * &inv;
    let innovation = measurement - c * &belief.mean;
    let mean = &belief.mean + &gain * &innovation;

    let n = belief.dim();
    let i_kc = DMatrix::identity(n, n) - &gain * c;
    let mut covariance = match update {
        CovarianceUpdate::Standard => &i_kc * p,
        CovarianceUpdate::Joseph => {
            &i_kc * p * i_kc.transpose() + &gain * measurement_noise * gain.transpose()
        }
    };
    symmetrize(&mut covariance);
    if mean.iter().any(|v| !v.is_finite()) || covariance.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite correction".into()));
    }
    Ok(GaussianBelief { mean, covariance })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        a: DMatrix<f64>,
    }

    impl TransitionModel for Linear {
        fn state_dim(&self) -> usize {
            self.a.nrows()
        }
        fn advance(&self, state: &DVector<f64>, _input: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(&self.a * state)
        }
        fn jacobian(&self, _state: &DVector<f64>, _input: &DVector<f64>) -> Result<DMatrix<f64>> {
            Ok(self.a.clone())
        }
    }

    fn cv_model(dt: f64) -> Linear {
        Linear {
            a: DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]),
        }
    }

    #[test]
    fn identity_dynamics_with_zero_noise_keeps_covariance() {
        let model = Linear {
            a: DMatrix::identity(3, 3),
        };
        let belief = GaussianBelief::new(
            DVector::from_vec(vec![1.0, -2.0, 0.5]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.7, 1.1])),
        );
        let out = predict(&model, &belief, &DVector::zeros(0), &DMatrix::zeros(3, 3)).unwrap();
        assert!((out.covariance.clone() - belief.covariance.clone()).amax() < 1e-12);
        assert_eq!(out.mean, belief.mean);
    }

    #[test]
    fn process_noise_increases_trace() {
        let model = cv_model(0.1);
        let belief = GaussianBelief::new(DVector::zeros(2), DMatrix::identity(2, 2));
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, 0.4]));
        let with_q = predict(&model, &belief, &DVector::zeros(0), &q).unwrap();
        let without = predict(&model, &belief, &DVector::zeros(0), &DMatrix::zeros(2, 2)).unwrap();
        assert!(with_q.covariance.trace() >= without.covariance.trace());
    }

    #[test]
    fn scalar_correction_hand_algebra() {
        // P = 1, C = 1, R = 1 -> K = 0.5, P+ = 0.5.
        let belief = GaussianBelief::new(DVector::zeros(1), DMatrix::identity(1, 1));
        let c = DMatrix::identity(1, 1);
        let y = DVector::from_vec(vec![2.0]);
        let r = DMatrix::identity(1, 1);
        let out = correct(&belief, &c, &y, &r, CovarianceUpdate::Standard).unwrap();
        assert!((out.mean[0] - 1.0).abs() < 1e-15);
        assert!((out.covariance[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn huge_noise_leaves_prior_unchanged() {
        let belief = GaussianBelief::new(
            DVector::from_vec(vec![0.4, -1.2]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        );
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let y = DVector::from_vec(vec![100.0]);
        let r = DMatrix::from_element(1, 1, 1e12);
        let out = correct(&belief, &c, &y, &r, CovarianceUpdate::Standard).unwrap();
        for i in 0..2 {
            assert!((out.mean[i] - belief.mean[i]).abs() / belief.mean[i].abs() < 1e-6);
        }
        assert!((out.covariance.clone() - belief.covariance.clone()).amax() < 1e-6);
    }

    #[test]
    fn correction_never_increases_trace() {
        let belief = GaussianBelief::new(
            DVector::from_vec(vec![0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.8]),
        );
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
        let y = DVector::from_vec(vec![0.3]);
        let r = DMatrix::from_element(1, 1, 0.5);
        for update in [CovarianceUpdate::Standard, CovarianceUpdate::Joseph] {
            let out = correct(&belief, &c, &y, &r, update).unwrap();
            assert!(out.covariance.trace() <= belief.covariance.trace() + 1e-12);
            out.validate().unwrap();
        }
    }

    #[test]
    fn numeric_jacobian_of_identity() {
        let x = DVector::from_vec(vec![0.2, -3.0, 1e5]);
        let j = numeric_jacobian(|v| Ok(v.clone()), &x, 3).unwrap();
        assert!((j - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn linear_filter_matches_textbook_kalman() {
        // 2-state constant-velocity model, position measured.
        let dt = 0.1;
        let model = cv_model(dt);
        let q = DMatrix::from_row_slice(2, 2, &[1e-4, 0.0, 0.0, 1e-3]);
        let r = DMatrix::from_element(1, 1, 0.04);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);

        let mut belief = GaussianBelief::new(
            DVector::from_vec(vec![0.0, 1.0]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0])),
        );
        // independently coded textbook filter on plain arrays
        let mut kx = [0.0, 1.0];
        let mut kp = [[1.0, 0.0], [0.0, 1.0]];

        let mut lcg = 99u64;
        let mut rand = || {
            lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (lcg >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for step in 0..500 {
            let y = (step as f64 * dt) + 0.2 * rand();
            belief = predict(&model, &belief, &DVector::zeros(0), &q).unwrap();
            belief = correct(
                &belief,
                &c,
                &DVector::from_vec(vec![y]),
                &r,
                CovarianceUpdate::Standard,
            )
            .unwrap();

            // oracle: x = F x; P = F P F' + Q; K = P H'/(H P H' + R); ...
            kx = [kx[0] + dt * kx[1], kx[1]];
            let p00 = kp[0][0] + dt * (kp[1][0] + kp[0][1]) + dt * dt * kp[1][1] + q[(0, 0)];
            let p01 = kp[0][1] + dt * kp[1][1];
            let p10 = kp[1][0] + dt * kp[1][1];
            let p11 = kp[1][1] + q[(1, 1)];
            kp = [[p00, p01], [p10, p11]];
            let s = kp[0][0] + r[(0, 0)];
            let k0 = kp[0][0] / s;
            let k1 = kp[1][0] / s;
            let innov = y - kx[0];
            kx = [kx[0] + k0 * innov, kx[1] + k1 * innov];
            kp = [
                [(1.0 - k0) * kp[0][0], (1.0 - k0) * kp[0][1]],
                [kp[1][0] - k1 * kp[0][0], kp[1][1] - k1 * kp[0][1]],
            ];
            // symmetrize like the implementation
            let off = 0.5 * (kp[0][1] + kp[1][0]);
            kp[0][1] = off;
            kp[1][0] = off;

            for i in 0..2 {
                let scale = kx[i].abs().max(1.0);
                assert!(
                    (belief.mean[i] - kx[i]).abs() / scale < 1e-8,
                    "mean mismatch at step {step}"
                );
            }
            let pm = [[kp[0][0], kp[0][1]], [kp[1][0], kp[1][1]]];
            for i in 0..2 {
                for j in 0..2 {
                    let scale = pm[i][j].abs().max(1e-6);
                    assert!(
                        (belief.covariance[(i, j)] - pm[i][j]).abs() / scale < 1e-8,
                        "cov mismatch at step {step} ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn filter_matches_batch_least_squares_marginals() {
        // The filtered estimate at step k equals the endpoint marginal of the
        // batch MAP problem over x_0..x_k.
        let dt = 0.5;
        let model = cv_model(dt);
        let f = model.a.clone();
        let q = DMatrix::from_row_slice(2, 2, &[2e-3, 1e-4, 1e-4, 4e-3]);
        let r = DMatrix::from_element(1, 1, 0.09);
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let p0 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.25]));
        let x0 = DVector::from_vec(vec![0.1, 0.8]);

        let mut lcg = 7u64;
        let mut rand = || {
            lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (lcg >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let measurements: Vec<f64> = (1..=25).map(|k| 0.8 * dt * k as f64 + 0.3 * rand()).collect();

        let q_inv = q.clone().try_inverse().unwrap();
        let r_inv = r.clone().try_inverse().unwrap();
        let p0_inv = p0.clone().try_inverse().unwrap();

        let mut belief = GaussianBelief::new(x0.clone(), p0.clone());
        for (step, &y) in measurements.iter().enumerate() {
            belief = predict(&model, &belief, &DVector::zeros(0), &q).unwrap();
            belief = correct(
                &belief,
                &h,
                &DVector::from_vec(vec![y]),
                &r,
                CovarianceUpdate::Standard,
            )
            .unwrap();

            // batch normal equations over x_0..x_{step+1}
            let k = step + 1;
            let dim = 2 * (k + 1);
            let mut omega = DMatrix::<f64>::zeros(dim, dim);
            let mut eta = DVector::<f64>::zeros(dim);
            omega.view_mut((0, 0), (2, 2)).copy_from(&p0_inv);
            eta.rows_mut(0, 2).copy_from(&(&p0_inv * &x0));
            for j in 0..k {
                // transition x_{j+1} = F x_j + w
                let ftqf = f.transpose() * &q_inv * &f;
                let ftq = f.transpose() * &q_inv;
                for (a, b, m) in [
                    (2 * j, 2 * j, &ftqf),
                    (2 * j + 2, 2 * j + 2, &q_inv),
                ] {
                    let mut block = omega.view_mut((a, b), (2, 2));
                    block += m;
                }
                let mut ob = omega.view_mut((2 * j, 2 * j + 2), (2, 2));
                ob += -&ftq;
                let mut ob = omega.view_mut((2 * j + 2, 2 * j), (2, 2));
                ob += -ftq.transpose();
                // measurement at x_{j+1}
                let hth = h.transpose() * &r_inv * &h;
                let mut mb = omega.view_mut((2 * j + 2, 2 * j + 2), (2, 2));
                mb += &hth;
                let hty = h.transpose() * &r_inv * DVector::from_vec(vec![measurements[j]]);
                let mut er = eta.rows_mut(2 * j + 2, 2);
                er += hty;
            }
            let omega_inv = omega.clone().try_inverse().unwrap();
            let mean_all = &omega_inv * &eta;
            let marg_mean = mean_all.rows(2 * k, 2).clone_owned();
            let marg_cov = omega_inv.view((2 * k, 2 * k), (2, 2)).clone_owned();

            for i in 0..2 {
                assert!(
                    (belief.mean[i] - marg_mean[i]).abs() / marg_mean[i].abs().max(1.0) < 1e-8,
                    "mean mismatch at step {step}"
                );
                for j in 0..2 {
                    let scale = marg_cov[(i, j)].abs().max(1e-9);
                    assert!(
                        (belief.covariance[(i, j)] - marg_cov[(i, j)]).abs() / scale < 1e-6,
                        "cov mismatch at step {step}"
                    );
                }
            }
        }
    }

    #[test]
    fn nees_consistency_on_matched_linear_system() {
        // 12-state linear system (6 constant-velocity pairs), matched Q and R:
        // the time-averaged NEES over a 60 s run must lie in the 95% band for
        // 12 degrees of freedom, [4.4037885, 23.3366642].
        let dt = 0.1;
        let n = 12;
        let mut a = DMatrix::identity(n, n);
        for b in 0..6 {
            a[(2 * b, 2 * b + 1)] = dt;
        }
        let model = Linear { a: a.clone() };
        let mut q = DMatrix::zeros(n, n);
        for b in 0..6 {
            q[(2 * b, 2 * b)] = 1e-4;
            q[(2 * b + 1, 2 * b + 1)] = 1e-3;
        }
        // positions measured
        let mut h = DMatrix::zeros(6, n);
        for b in 0..6 {
            h[(b, 2 * b)] = 1.0;
        }
        let r: DMatrix<f64> = DMatrix::from_diagonal(&DVector::from_element(6, 0.01));

        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let std_normal = Normal::new(0.0, 1.0).unwrap();

        let mut truth = DVector::zeros(n);
        let mut belief = GaussianBelief::new(DVector::zeros(n), q.clone() * 10.0 + DMatrix::identity(n, n) * 0.01);
        let mut nees_sum = 0.0;
        let steps = 600;
        for _ in 0..steps {
            truth = &a * &truth;
            for i in 0..n {
                truth[i] += q[(i, i)].sqrt() * std_normal.sample(&mut rng);
            }
            let mut y = &h * &truth;
            for i in 0..6 {
                y[i] += r[(i, i)].sqrt() * std_normal.sample(&mut rng);
            }
            belief = predict(&model, &belief, &DVector::zeros(0), &q).unwrap();
            belief = correct(&belief, &h, &y, &r, CovarianceUpdate::Standard).unwrap();
            let err = &truth - &belief.mean;
            let p_inv = belief.covariance.clone().try_inverse().unwrap();
            nees_sum += (err.transpose() * p_inv * &err)[(0, 0)];
        }
        let avg = nees_sum / steps as f64;
        assert!(
            (4.4037885..23.3366642).contains(&avg),
            "average NEES {avg} outside 95% chi-square band for 12 dof"
        );
    }

    #[test]
    fn validate_rejects_asymmetry_and_indefiniteness() {
        let ok = GaussianBelief::new(DVector::zeros(2), DMatrix::identity(2, 2));
        ok.validate().unwrap();
        let bad = GaussianBelief::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]),
        );
        assert!(bad.validate().is_err());
        let indef = GaussianBelief::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        );
        assert!(indef.validate().is_err());
    }
}
