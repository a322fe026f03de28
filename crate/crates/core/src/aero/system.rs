use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothing width of `tanh(theta_dot / eps)` standing in for `sign(theta_dot)`.
pub const SIGN_SMOOTHING: f64 = 1e-4;

/// Coupled pitch / moment-coefficient model in nondimensional time:
///
/// ```text
/// theta''  = c1 sgn(theta') + c2 theta + c3 C_M + c4 theta' + c5 theta^3
/// C_M'     = B (e1 theta + e2 theta' + e3 theta^3 + e4 theta^2 theta'
///               + e5 theta^5 + e6 theta^4 theta' - C_M) + c6 theta'' + B sigma xi
/// ```
///
/// The second line is the moment equation multiplied through by `B` with
/// `theta''` substituted from the first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeroSystem {
    pub c: [f64; 6],
    pub b: f64,
    pub e: [f64; 6],
    pub sigma: f64,
}

impl AeroSystem {
    /// Data-generating coefficients. `c3` is positive: with the tabulated
    /// negative value the origin has a real unstable eigenvalue and no limit
    /// cycle exists.
    pub fn reference() -> Self {
        Self {
            c: [-6.875e-5, -2.038e-2, 3.819e-2, -7.275e-3, 1.824e-1, -2.507e-1],
            b: 0.2,
            e: [-1.25, -1.0, 100.0, -500.0, 0.0, 0.0],
            sigma: 2e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c.iter().chain(&self.e).any(|v| !v.is_finite()) {
            return Err(Error::invalid("system coefficients must be finite"));
        }
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(Error::invalid(format!("B must be positive, got {}", self.b)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Linear part about the origin: friction, cubic and higher terms removed.
    pub fn linearized(&self) -> Self {
        let mut s = self.clone();
        s.c[0] = 0.0;
        s.c[4] = 0.0;
        s.e[2..].iter_mut().for_each(|v| *v = 0.0);
        s
    }

    /// Drift `f(x)` of the state `(theta, theta', C_M)`.
    pub fn drift(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.drift_and_jacobian(x).0
    }

    /// Analytic Jacobian of [`drift`](Self::drift).
    pub fn jacobian(&self, x: &Vector3<f64>) -> Matrix3<f64> {
        self.drift_and_jacobian(x).1
    }

    /// Drift and Jacobian sharing one evaluation of the smoothed sign.
    pub fn drift_and_jacobian(&self, x: &Vector3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
        let [c1, c2, c3, c4, c5, c6] = self.c;
        let [e1, e2, e3, e4, e5, e6] = self.e;
        let (th, om, cm) = (x[0], x[1], x[2]);
        let th2 = th * th;
        let th4 = th2 * th2;
        let sign = (om / SIGN_SMOOTHING).tanh();
        let acc = c1 * sign + c2 * th + c3 * cm + c4 * om + c5 * th2 * th;
        let poly = e1 * th + e2 * om + e3 * th2 * th + e4 * th2 * om + e5 * th4 * th + e6 * th4 * om;
        let drift = Vector3::new(om, acc, self.b * (poly - cm) + c6 * acc);

        let da_dth = c2 + 3.0 * c5 * th2;
        let da_dom = c1 * (1.0 - sign * sign) / SIGN_SMOOTHING + c4;
        let da_dcm = c3;
        let dp_dth = e1 + 3.0 * e3 * th2 + 2.0 * e4 * th * om + 5.0 * e5 * th4 + 4.0 * e6 * th2 * th * om;
        let dp_dom = e2 + e4 * th2 + e6 * th4;
        let jac = Matrix3::new(
            0.0,
            1.0,
            0.0,
            da_dth,
            da_dom,
            da_dcm,
            self.b * dp_dth + c6 * da_dth,
            self.b * dp_dom + c6 * da_dom,
            -self.b + c6 * da_dcm,
        );
        (drift, jac)
    }

    /// Diffusion coefficient on the `C_M` equation.
    pub fn diffusion(&self) -> f64 {
        self.b * self.sigma
    }
}
