//! Weighted Gaussian kernels: KDE construction, block partitioning and
//! conditional decomposition.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Index split of the parameter vector into questionable coordinates (those
/// receiving an ARD prior) and coordinates that are relevant a priori.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterPartition {
    total_dim: usize,
    questionable: Vec<usize>,
    relevant: Vec<usize>,
}

impl ParameterPartition {
    /// Build a partition from the questionable indices; the relevant indices are
    /// the remaining coordinates in increasing order.
    pub fn new(total_dim: usize, questionable: Vec<usize>) -> Result<Self> {
        let relevant = (0..total_dim)
            .filter(|i| !questionable.contains(i))
            .collect();
        Self::from_parts(total_dim, questionable, relevant)
    }

    pub fn from_parts(total_dim: usize, questionable: Vec<usize>, relevant: Vec<usize>) -> Result<Self> {
        if questionable.is_empty() {
            return Err(Error::invalid("partition needs at least one questionable index"));
        }
        let mut seen = vec![false; total_dim];
        for &i in questionable.iter().chain(&relevant) {
            if i >= total_dim {
                return Err(Error::invalid(format!(
                    "partition index {i} out of range for dimension {total_dim}"
                )));
            }
            if seen[i] {
                return Err(Error::invalid(format!("partition index {i} appears twice")));
            }
            seen[i] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("partition does not cover index {missing}")));
        }
        Ok(Self {
            total_dim,
            questionable,
            relevant,
        })
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn questionable(&self) -> &[usize] {
        &self.questionable
    }

    pub fn relevant(&self) -> &[usize] {
        &self.relevant
    }

    pub fn n_alpha(&self) -> usize {
        self.questionable.len()
    }

    pub fn n_relevant(&self) -> usize {
        self.relevant.len()
    }
}

/// One weighted Gaussian kernel `a N(phi | mu, Sigma)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianKernel {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianKernel {
    pub fn new(weight: f64, mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::invalid(format!("kernel weight must be positive, got {weight}")));
        }
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::invalid(format!(
                "kernel mean has {d} entries but covariance is {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > 1e-12 * covariance.amax().max(1.0) {
            return Err(Error::invalid(format!("kernel covariance not symmetric (|C - C^T| = {asym:e})")));
        }
        Ok(Self {
            weight,
            mean,
            covariance,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// A kernel split into questionable (`alpha`) and a-priori-relevant (`rel`) blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionedKernel {
    pub weight: f64,
    pub mean_alpha: DVector<f64>,
    pub mean_rel: DVector<f64>,
    pub cov_alpha: DMatrix<f64>,
    pub cov_rel: DMatrix<f64>,
    /// Cross covariance, `N_alpha x (N_phi - N_alpha)`.
    pub cross_cov: DMatrix<f64>,
}

impl PartitionedKernel {
    /// Reassemble the full kernel in the original coordinate order.
    pub fn assemble(&self, partition: &ParameterPartition) -> GaussianKernel {
        let d = partition.total_dim();
        let q = partition.questionable();
        let r = partition.relevant();
        let mut mean = DVector::zeros(d);
        let mut cov = DMatrix::zeros(d, d);
        for (a, &i) in q.iter().enumerate() {
            mean[i] = self.mean_alpha[a];
            for (b, &j) in q.iter().enumerate() {
                cov[(i, j)] = self.cov_alpha[(a, b)];
            }
            for (b, &j) in r.iter().enumerate() {
                cov[(i, j)] = self.cross_cov[(a, b)];
                cov[(j, i)] = self.cross_cov[(a, b)];
            }
        }
        for (a, &i) in r.iter().enumerate() {
            mean[i] = self.mean_rel[a];
            for (b, &j) in r.iter().enumerate() {
                cov[(i, j)] = self.cov_rel[(a, b)];
            }
        }
        GaussianKernel {
            weight: self.weight,
            mean,
            covariance: cov,
        }
    }
}

pub(crate) fn select_vec(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

pub(crate) fn select_block(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

/// Split a kernel into partition blocks.
pub fn partition_kernel(kernel: &GaussianKernel, partition: &ParameterPartition) -> Result<PartitionedKernel> {
    if kernel.dim() != partition.total_dim() {
        return Err(Error::invalid(format!(
            "kernel dimension {} does not match partition dimension {}",
            kernel.dim(),
            partition.total_dim()
        )));
    }
    let q = partition.questionable();
    let r = partition.relevant();
    Ok(PartitionedKernel {
        weight: kernel.weight,
        mean_alpha: select_vec(&kernel.mean, q),
        mean_rel: select_vec(&kernel.mean, r),
        cov_alpha: select_block(&kernel.covariance, q, q),
        cov_rel: select_block(&kernel.covariance, r, r),
        cross_cov: select_block(&kernel.covariance, q, r),
    })
}

/// Conditional distribution of the relevant block given the questionable block:
/// returns `(mu_rel + C^T S_a^-1 (phi_a - mu_a), S_rel - C^T S_a^-1 C)`.
pub fn condition_kernel(pk: &PartitionedKernel, phi_alpha: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if phi_alpha.len() != pk.mean_alpha.len() {
        return Err(Error::invalid(format!(
            "conditioning value has {} entries, expected {}",
            phi_alpha.len(),
            pk.mean_alpha.len()
        )));
    }
    let chol = linalg::cholesky_strict(&pk.cov_alpha, "questionable covariance block")?;
    let shift = chol.solve(&(phi_alpha - &pk.mean_alpha));
    let mean = &pk.mean_rel + pk.cross_cov.transpose() * shift;
    let mut cov = &pk.cov_rel - pk.cross_cov.transpose() * chol.solve(&pk.cross_cov);
    linalg::symmetrize(&mut cov);
    Ok((mean, cov))
}

/// How the kernel covariances are stored.
#[derive(Clone, Debug)]
pub enum KernelCovariances {
    /// All kernels share one covariance (the KDE case).
    Shared(Arc<DMatrix<f64>>),
    PerKernel(Vec<DMatrix<f64>>),
}

/// Provenance of a KDE construction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KdeInfo {
    pub n_samples: usize,
    /// Scott factor `n^(-1/(d+4))`; the kernel covariance is its square times
    /// the sample covariance.
    pub bandwidth_factor: f64,
    pub covariance_estimator: String,
}

/// Gaussian mixture approximation of likelihood times known prior.
#[derive(Clone, Debug)]
pub struct GmmApproximation {
    partition: ParameterPartition,
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covariances: KernelCovariances,
    kde: Option<KdeInfo>,
}

impl GmmApproximation {
    pub fn from_kernels(kernels: Vec<GaussianKernel>, partition: ParameterPartition) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::invalid("a mixture needs at least one kernel"));
        }
        let d = partition.total_dim();
        if let Some(k) = kernels.iter().position(|k| k.dim() != d) {
            return Err(Error::invalid(format!(
                "kernel {k} has dimension {}, partition expects {d}",
                kernels[k].dim()
            )));
        }
        let shared = kernels.windows(2).all(|w| w[0].covariance == w[1].covariance);
        let weights = kernels.iter().map(|k| k.weight).collect();
        let means = kernels.iter().map(|k| k.mean.clone()).collect();
        let covariances = if shared {
            KernelCovariances::Shared(Arc::new(kernels[0].covariance.clone()))
        } else {
            KernelCovariances::PerKernel(kernels.into_iter().map(|k| k.covariance).collect())
        };
        Ok(Self {
            partition,
            weights,
            means,
            covariances,
            kde: None,
        })
    }

    /// Mixture with one covariance shared by every kernel.
    pub fn with_shared_covariance(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariance: DMatrix<f64>,
        partition: ParameterPartition,
    ) -> Result<Self> {
        if means.is_empty() || means.len() != weights.len() {
            return Err(Error::invalid("weights and means must be non-empty and of equal length"));
        }
        let d = partition.total_dim();
        if means.iter().any(|m| m.len() != d) || covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::invalid("kernel dimension does not match the partition"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::invalid("kernel weights must be positive"));
        }
        Ok(Self {
            partition,
            weights,
            means,
            covariances: KernelCovariances::Shared(Arc::new(covariance)),
            kde: None,
        })
    }

    pub fn partition(&self) -> &ParameterPartition {
        &self.partition
    }

    pub fn n_kernels(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.partition.total_dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &KernelCovariances {
        &self.covariances
    }

    pub fn kde_info(&self) -> Option<&KdeInfo> {
        self.kde.as_ref()
    }

    pub fn covariance(&self, k: usize) -> &DMatrix<f64> {
        match &self.covariances {
            KernelCovariances::Shared(c) => c,
            KernelCovariances::PerKernel(cs) => &cs[k],
        }
    }

    pub fn kernel(&self, k: usize) -> GaussianKernel {
        GaussianKernel {
            weight: self.weights[k],
            mean: self.means[k].clone(),
            covariance: self.covariance(k).clone(),
        }
    }

    pub fn kernels(&self) -> impl Iterator<Item = GaussianKernel> + '_ {
        (0..self.n_kernels()).map(|k| self.kernel(k))
    }

    /// Copy of the mixture with the kernels in a different order.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut out = self.clone();
        out.weights = order.iter().map(|&k| self.weights[k]).collect();
        out.means = order.iter().map(|&k| self.means[k].clone()).collect();
        if let KernelCovariances::PerKernel(cs) = &self.covariances {
            out.covariances = KernelCovariances::PerKernel(order.iter().map(|&k| cs[k].clone()).collect());
        }
        out
    }

    /// Unnormalized mixture density `sum_k a_k N(phi | mu_k, Sigma_k)`.
    pub fn density(&self, phi: &[f64]) -> Result<f64> {
        let mut logs = Vec::with_capacity(self.n_kernels());
        for k in 0..self.n_kernels() {
            logs.push(
                self.weights[k].ln()
                    + linalg::log_gaussian_density(phi, self.means[k].as_slice(), self.covariance(k))?,
            );
        }
        Ok(linalg::log_sum_exp(&logs).exp())
    }

    /// Normalized marginal pdf of a single coordinate.
    pub fn marginal_pdf(&self, coord: usize, x: f64) -> f64 {
        let total: f64 = self.weights.iter().sum();
        (0..self.n_kernels())
            .map(|k| self.weights[k] * normal_pdf(x, self.means[k][coord], self.covariance(k)[(coord, coord)]))
            .sum::<f64>()
            / total
    }

    /// Mean and variance of a single coordinate under the normalized mixture.
    pub fn marginal_moments(&self, coord: usize) -> (f64, f64) {
        let total: f64 = self.weights.iter().sum();
        let comps = (0..self.n_kernels()).map(|k| {
            (
                self.weights[k] / total,
                self.means[k][coord],
                self.covariance(k)[(coord, coord)],
            )
        });
        mixture_moments(comps)
    }

    pub fn to_document(&self) -> GmmDocument {
        GmmDocument {
            version: GMM_VERSION.to_string(),
            partition: self.partition.clone(),
            kernels: self
                .kernels()
                .map(|k| KernelDocument {
                    weight: k.weight,
                    mean: k.mean.iter().copied().collect(),
                    cov: row_major(&k.covariance),
                })
                .collect(),
            kde: self.kde.clone(),
        }
    }

    pub fn from_document(doc: &GmmDocument) -> Result<Self> {
        if doc.version != GMM_VERSION {
            return Err(Error::invalid(format!(
                "unsupported mixture document version `{}`",
                doc.version
            )));
        }
        let partition = ParameterPartition::from_parts(
            doc.partition.total_dim,
            doc.partition.questionable.clone(),
            doc.partition.relevant.clone(),
        )?;
        let d = partition.total_dim();
        let kernels = doc
            .kernels
            .iter()
            .enumerate()
            .map(|(k, kd)| {
                if kd.mean.len() != d || kd.cov.len() != d * d {
                    return Err(Error::invalid(format!("kernel {k} has inconsistent sizes")));
                }
                GaussianKernel::new(
                    kd.weight,
                    DVector::from_column_slice(&kd.mean),
                    DMatrix::from_row_slice(d, d, &kd.cov),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut gmm = Self::from_kernels(kernels, partition)?;
        gmm.kde = doc.kde.clone();
        Ok(gmm)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }
}

pub const GMM_VERSION: &str = "gmm-v1";

/// On-disk mixture representation (`gmm-v1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmDocument {
    pub version: String,
    pub partition: ParameterPartition,
    pub kernels: Vec<KernelDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kde: Option<KdeInfo>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelDocument {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Covariance, row-major.
    pub cov: Vec<f64>,
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub(crate) fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Mean and variance of a 1D mixture given `(weight, mean, variance)` triples
/// with weights summing to one.
pub(crate) fn mixture_moments(comps: impl Iterator<Item = (f64, f64, f64)> + Clone) -> (f64, f64) {
    let mean: f64 = comps.clone().map(|(w, m, _)| w * m).sum();
    let second: f64 = comps.map(|(w, m, v)| w * (v + (m - mean) * (m - mean))).sum();
    (mean, second)
}

/// Scott's rule bandwidth factor `n^(-1/(d+4))`.
pub fn scott_factor(n: usize, d: usize) -> f64 {
    (n as f64).powf(-1.0 / (d as f64 + 4.0))
}

/// Gaussian KDE over samples: one unit-weight kernel per sample, all sharing
/// `scott_factor^2` times the unbiased sample covariance.
pub fn build_kde_gmm(samples: &[Vec<f64>], partition: &ParameterPartition) -> Result<GmmApproximation> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid(format!("KDE needs at least 2 samples, got {n}")));
    }
    let d = partition.total_dim();
    if let Some(i) = samples.iter().position(|s| s.len() != d) {
        return Err(Error::invalid(format!(
            "sample {i} has {} entries, expected {d}",
            samples[i].len()
        )));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples contain non-finite values"));
    }
    let means: Vec<DVector<f64>> = samples.iter().map(|s| DVector::from_column_slice(s)).collect();
    let centre = means.iter().fold(DVector::zeros(d), |acc, m| acc + m) / n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for m in &means {
        let r = m - &centre;
        cov += &r * r.transpose();
    }
    cov /= (n - 1) as f64;
    linalg::symmetrize(&mut cov);

    // Constant columns, up to rounding in the mean.
    if let Some(i) = (0..d).find(|&i| !(cov[(i, i)] > (4.0 * f64::EPSILON * centre[i]).powi(2))) {
        return Err(Error::singular(format!("sample covariance: dimension {i} has zero variance")));
    }
    if let Err(Error::Singular { .. }) = linalg::cholesky(&cov, "sample covariance") {
        let dim = linalg::first_failing_pivot(&cov).unwrap_or(0);
        return Err(Error::singular(format!(
            "sample covariance: dimension {dim} is linearly dependent on the preceding dimensions"
        )));
    }
    let factor = scott_factor(n, d);
    let bandwidth = cov * (factor * factor);
    let mut gmm = GmmApproximation::with_shared_covariance(vec![1.0; n], means, bandwidth, partition.clone())?;
    gmm.kde = Some(KdeInfo {
        n_samples: n,
        bandwidth_factor: factor,
        covariance_estimator: "unbiased".to_string(),
    });
    Ok(gmm)
}
