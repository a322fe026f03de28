//! Extended Kalman filter likelihood via the prediction-error decomposition.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::simulate::{substeps, DEFAULT_TAU_PER_SECOND};
use super::system::AeroSystem;
use super::ObservationSeries;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EkfConfig {
    pub x0_mean: [f64; 3],
    pub x0_std: [f64; 3],
    pub noise_std_rad: f64,
    pub tau_per_second: f64,
    pub dt_max: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            x0_mean: [0.0; 3],
            x0_std: [0.1, 0.05, 0.2],
            noise_std_rad: 0.2f64.to_radians(),
            tau_per_second: DEFAULT_TAU_PER_SECOND,
            dt_max: 0.01,
        }
    }
}

/// Log-likelihood of the pitch series under `sys`.
///
/// The state is propagated between observations with the simulator's
/// Euler-Maruyama substeps, the covariance with `Phi = I + dt F(x)` and
/// process noise `(B sigma)^2 dt` on `C_M`.
pub fn ekf_log_likelihood(sys: &AeroSystem, data: &ObservationSeries, cfg: &EkfConfig) -> Result<f64> {
    sys.validate()?;
    if data.is_empty() {
        return Ok(0.0);
    }
    if !(cfg.noise_std_rad > 0.0) {
        return Err(Error::invalid("EKF measurement noise must be positive"));
    }
    let spacing = data.spacing().unwrap_or(0.0);
    let (n_sub, dt) = if data.len() > 1 {
        substeps(spacing * cfg.tau_per_second, cfg.dt_max)
    } else {
        (0, cfg.dt_max)
    };
    let q = sys.diffusion().powi(2) * dt;
    let r = cfg.noise_std_rad * cfg.noise_std_rad;

    let mut x = Vector3::from(cfg.x0_mean);
    let mut p = Matrix3::from_diagonal(&Vector3::from(cfg.x0_std).map(|s| s * s));
    let mut ll = 0.0;
    for (k, &y) in data.pitch_rad.iter().enumerate() {
        if k > 0 {
            for _ in 0..n_sub {
                let (f, jac) = sys.drift_and_jacobian(&x);
                let phi = Matrix3::identity() + jac * dt;
                x += f * dt;
                p = phi * p * phi.transpose();
                p[(2, 2)] += q;
            }
        }
        let s = p[(0, 0)] + r;
        let e = y - x[0];
        if !s.is_finite() || !(s > 0.0) || !e.is_finite() {
            return Err(Error::Evaluation(format!("innovation variance {s} at observation {k}")));
        }
        ll -= 0.5 * (LN_2PI + s.ln() + e * e / s);
        let gain = p.column(0) / s;
        x += gain * e;
        // Joseph form keeps P symmetric positive semi-definite.
        let mut ikh = Matrix3::identity();
        ikh.column_mut(0).axpy(-1.0, &gain, 1.0);
        p = ikh * p * ikh.transpose() + gain * gain.transpose() * r;
    }
    if !ll.is_finite() {
        return Err(Error::Evaluation("non-finite log-likelihood".into()));
    }
    Ok(ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aero::simulate::{synthesize_observations, SimulationConfig};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    /// Textbook linear Kalman filter with generic matrices.
    fn linear_kf(a: &DMatrix<f64>, q: f64, data: &ObservationSeries, cfg: &EkfConfig, n_sub: usize, dt: f64) -> f64 {
        let phi = DMatrix::identity(3, 3) + a * dt;
        let mut qm = DMatrix::zeros(3, 3);
        qm[(2, 2)] = q;
        let h = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let r = cfg.noise_std_rad.powi(2);
        let mut x = DVector::from_column_slice(&cfg.x0_mean);
        let mut p = DMatrix::from_diagonal(&DVector::from_iterator(3, cfg.x0_std.iter().map(|s| s * s)));
        let mut ll = 0.0;
        for (k, y) in data.pitch_rad.iter().enumerate() {
            if k > 0 {
                for _ in 0..n_sub {
                    x = &phi * &x;
                    p = &phi * &p * phi.transpose() + &qm;
                }
            }
            let s = (&h * &p * h.transpose())[(0, 0)] + r;
            let e = y - x[0];
            ll += -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + e * e / s);
            let kg = &p * h.transpose() / s;
            x += &kg * e;
            p = (DMatrix::identity(3, 3) - &kg * &h) * &p;
        }
        ll
    }

    #[test]
    fn matches_exact_kalman_filter_on_linear_model() {
        let mut sys = AeroSystem::reference().linearized();
        // Damped variant so the linear data stay bounded.
        sys.e[0] = 0.0;
        sys.e[1] = -3.0;
        let sim = SimulationConfig {
            duration_s: 3.0,
            settle_s: 0.0,
            initial_state: [0.05, 0.0, 0.0],
            ..Default::default()
        };
        let data = synthesize_observations(&sys, &sim).unwrap();
        let cfg = EkfConfig::default();
        let (n_sub, dt) = substeps(data.spacing().unwrap() * cfg.tau_per_second, cfg.dt_max);
        let a = DMatrix::from_fn(3, 3, |i, j| sys.jacobian(&Vector3::zeros())[(i, j)]);
        let exact = linear_kf(&a, sys.diffusion().powi(2) * dt, &data, &cfg, n_sub, dt);
        let got = ekf_log_likelihood(&sys, &data, &cfg).unwrap();
        assert_relative_eq!(got, exact, max_relative = 1e-10);
    }

    #[test]
    fn empty_series_has_zero_log_likelihood() {
        let data = ObservationSeries::new(vec![], vec![]).unwrap();
        assert_eq!(ekf_log_likelihood(&AeroSystem::reference(), &data, &EkfConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn true_parameters_beat_doubled_cubic_stiffness() {
        let sys = AeroSystem::reference();
        let mut wrong = sys.clone();
        wrong.e[2] *= 2.0;
        let mut wins = 0;
        for seed in 0..10 {
            let sim = SimulationConfig {
                duration_s: 5.0,
                seed,
                ..Default::default()
            };
            let data = synthesize_observations(&sys, &sim).unwrap();
            let cfg = EkfConfig::default();
            if ekf_log_likelihood(&sys, &data, &cfg).unwrap() > ekf_log_likelihood(&wrong, &data, &cfg).unwrap() {
                wins += 1;
            }
        }
        assert!(wins >= 9, "{wins}/10");
    }

    #[test]
    fn time_shift_invariance() {
        let sys = AeroSystem::reference();
        let sim = SimulationConfig {
            duration_s: 2.0,
            ..Default::default()
        };
        let data = synthesize_observations(&sys, &sim).unwrap();
        let shifted = ObservationSeries::new(
            data.t_seconds.iter().map(|t| t + 7.5).collect(),
            data.pitch_rad.clone(),
        )
        .unwrap();
        let cfg = EkfConfig::default();
        assert_relative_eq!(
            ekf_log_likelihood(&sys, &data, &cfg).unwrap(),
            ekf_log_likelihood(&sys, &shifted, &cfg).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn non_finite_innovation_is_an_error() {
        let data = ObservationSeries::new(vec![0.0, 0.001], vec![0.0, f64::INFINITY]);
        assert!(data.is_err());
        let mut sys = AeroSystem::reference();
        sys.e[2] = 1e300;
        let data = ObservationSeries::new(vec![0.0, 0.001, 0.002], vec![0.5, 0.5, 0.5]).unwrap();
        let cfg = EkfConfig {
            x0_mean: [0.5, 0.0, 0.0],
            ..Default::default()
        };
        assert!(matches!(ekf_log_likelihood(&sys, &data, &cfg), Err(Error::Evaluation(_))));
    }
}
