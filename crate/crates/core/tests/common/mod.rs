#![allow(dead_code)]

pub mod quadrature;
pub mod regression;

use nalgebra::{DMatrix, DVector};
use nsbl_core::{GaussianKernel, GmmApproximation, ParameterPartition};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn random_spd<R: Rng>(rng: &mut R, d: usize, scale: f64) -> DMatrix<f64> {
    let a: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    (&a * a.transpose() + DMatrix::identity(d, d) * 0.3) * scale
}

pub fn random_gmm<R: Rng>(rng: &mut R, n_phi: usize, k: usize, n_alpha: usize) -> GmmApproximation {
    let mut idx: Vec<usize> = (0..n_phi).collect();
    idx.shuffle(rng);
    let mut questionable = idx[..n_alpha].to_vec();
    questionable.sort_unstable();
    let kernels = (0..k)
        .map(|_| {
            let w = rng.random_range(0.2..2.0);
            let mean = DVector::from_fn(n_phi, |_, _| rng.random_range(-1.5..1.5));
            GaussianKernel::new(w, mean, random_spd(rng, n_phi, 0.5)).unwrap()
        })
        .collect();
    GmmApproximation::from_kernels(kernels, ParameterPartition::new(n_phi, questionable).unwrap()).unwrap()
}

/// Dense Gaussian density with a precomputed inverse factor.
pub struct Density {
    mean: Vec<f64>,
    l_inv: DMatrix<f64>,
    log_norm: f64,
}

impl Density {
    pub fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Self {
        let d = mean.len();
        let chol = cov.clone().cholesky().expect("SPD");
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Self {
            mean: mean.iter().copied().collect(),
            l_inv: l.try_inverse().unwrap(),
            log_norm: -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
        }
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        let mut q = 0.0;
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..=i {
                s += self.l_inv[(i, j)] * (x[j] - self.mean[j]);
            }
            q += s * s;
        }
        self.log_norm - 0.5 * q
    }
}

/// `GMM(phi) * N(phi_alpha | 0, A^-1)`, integrated by quadrature.
///
/// The known coordinates integrate out of each kernel by dropping them, so the
/// quadrature runs over the questionable block only, one kernel at a time. Each
/// kernel's integral is taken in coordinates `x = c + L z`, centred and whitened
/// by the precision `S^-1 + A` of its integrand. Any affine map with its exact
/// Jacobian leaves the integral unchanged; this one just makes it easy to resolve.
pub struct EvidenceIntegrand {
    kernels: Vec<Term>,
    alpha: Vec<f64>,
}

struct Term {
    weight: f64,
    density: Density,
    centre: DVector<f64>,
    l: DMatrix<f64>,
    log_jacobian: f64,
}

/// Half-width of the whitened integration box, in standard deviations.
const WHITENED_BOX: f64 = 10.0;

impl EvidenceIntegrand {
    pub fn new(gmm: &GmmApproximation, log_alpha: &[f64]) -> Self {
        let q = gmm.partition().questionable().to_vec();
        let n = q.len();
        let alpha: Vec<f64> = log_alpha.iter().map(|v| v.exp()).collect();
        let kernels = gmm
            .kernels()
            .map(|k| {
                let mean = DVector::from_fn(n, |a, _| k.mean[q[a]]);
                let cov = DMatrix::from_fn(n, n, |a, b| k.covariance[(q[a], q[b])]);
                let cov_inv = cov.clone().try_inverse().expect("SPD");
                let precision = &cov_inv + DMatrix::from_diagonal(&DVector::from_vec(alpha.clone()));
                let spread = precision.try_inverse().expect("SPD");
                let centre = &spread * &cov_inv * &mean;
                let l = spread.cholesky().expect("SPD").l();
                let log_jacobian = l.diagonal().iter().map(|v| v.ln()).sum();
                Term {
                    weight: k.weight,
                    density: Density::new(&mean, &cov),
                    centre,
                    l,
                    log_jacobian,
                }
            })
            .collect();
        Self { kernels, alpha }
    }

    fn log_prior(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.alpha)
            .map(|(v, &a)| 0.5 * (a / (2.0 * std::f64::consts::PI)).ln() - 0.5 * a * v * v)
            .sum()
    }

    /// Sum of the per-kernel integrals and of their error estimates.
    pub fn integrate(&self, rel_tol: f64, max_regions: usize) -> (f64, f64) {
        let n = self.alpha.len();
        let lo = vec![-WHITENED_BOX; n];
        let hi = vec![WHITENED_BOX; n];
        self.kernels.iter().fold((0.0, 0.0), |(value, error), t| {
            let f = |z: &[f64]| {
                let mut buf = [0.0; 8];
                let x = &mut buf[..n];
                for i in 0..n {
                    x[i] = t.centre[i] + (0..=i).map(|j| t.l[(i, j)] * z[j]).sum::<f64>();
                }
                (t.density.log_pdf(x) + self.log_prior(x) + t.log_jacobian).exp()
            };
            let (v, e) = quadrature::integrate(f, &lo, &hi, rel_tol, 0.0, max_regions);
            (value + t.weight * v, error + t.weight * e)
        })
    }
}
