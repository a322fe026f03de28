use nalgebra::{DMatrix, DVector};
use nsbl_core::{GaussianKernel, GmmApproximation, ParameterPartition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Linear regression `y = X w + e` with the first `n_alpha` weights under the
/// ARD prior and the rest under a known zero-mean Gaussian prior.
pub struct Regression {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub noise_var: f64,
    pub known_cov: DMatrix<f64>,
    pub n_alpha: usize,
}

impl Regression {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, p, n_alpha) = (30, 4, 2);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let w = DVector::from_vec(vec![1.5, 0.0, -0.7, 0.4]);
        let noise_var: f64 = 0.09;
        let e = DVector::from_fn(n, |_, _| noise_var.sqrt() * { let z: f64 = StandardNormal.sample(&mut rng); z });
        Self {
            y: &x * w + e,
            x,
            noise_var,
            known_cov: DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5])),
            n_alpha,
        }
    }

    pub fn log_lik_times_known_prior(&self, w: &DVector<f64>) -> f64 {
        let r = &self.y - &self.x * w;
        let n = self.y.len() as f64;
        let ll = -0.5 * (n * (2.0 * std::f64::consts::PI * self.noise_var).ln() + r.norm_squared() / self.noise_var);
        let wr = w.rows(self.n_alpha, w.len() - self.n_alpha).into_owned();
        ll + log_normal(&wr, &DVector::zeros(wr.len()), &self.known_cov)
    }

    /// The unnormalized product as one weighted Gaussian kernel.
    pub fn kernel(&self) -> GmmApproximation {
        let p = self.x.ncols();
        let mut precision = self.x.transpose() * &self.x / self.noise_var;
        let na = self.n_alpha;
        let known_prec = self.known_cov.clone().try_inverse().unwrap();
        for i in 0..p - na {
            for j in 0..p - na {
                precision[(na + i, na + j)] += known_prec[(i, j)];
            }
        }
        let cov = precision.try_inverse().unwrap();
        let mean = &cov * self.x.transpose() * &self.y / self.noise_var;
        // Any point recovers the scale; use the mode.
        let log_weight = self.log_lik_times_known_prior(&mean) - log_normal(&mean, &mean, &cov);
        let k = GaussianKernel::new(log_weight.exp(), mean, cov).unwrap();
        GmmApproximation::from_kernels(vec![k], ParameterPartition::new(p, (0..na).collect()).unwrap()).unwrap()
    }

    pub fn prior_cov(&self, alpha: &[f64]) -> DMatrix<f64> {
        let p = self.x.ncols();
        let mut c = DMatrix::zeros(p, p);
        for (i, a) in alpha.iter().enumerate() {
            c[(i, i)] = 1.0 / a;
        }
        let na = self.n_alpha;
        c.view_mut((na, na), (p - na, p - na)).copy_from(&self.known_cov);
        c
    }

    /// Marginal likelihood `N(y | 0, sigma^2 I + X S0 X^T)`.
    pub fn log_evidence(&self, alpha: &[f64]) -> f64 {
        let n = self.y.len();
        let c = DMatrix::identity(n, n) * self.noise_var + &self.x * self.prior_cov(alpha) * self.x.transpose();
        log_normal(&self.y, &DVector::zeros(n), &c)
    }

    /// Ridge posterior `(X^T X / sigma^2 + S0^-1)^-1`.
    pub fn posterior(&self, alpha: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let prec = self.x.transpose() * &self.x / self.noise_var + self.prior_cov(alpha).try_inverse().unwrap();
        let cov = prec.try_inverse().unwrap();
        let mean = &cov * self.x.transpose() * &self.y / self.noise_var;
        (mean, cov)
    }
}

pub fn log_normal(x: &DVector<f64>, m: &DVector<f64>, c: &DMatrix<f64>) -> f64 {
    nsbl_core::linalg::log_gaussian_density(x.as_slice(), m.as_slice(), c).unwrap()
}
