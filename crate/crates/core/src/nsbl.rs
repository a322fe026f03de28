//! Semi-analytical evidence, posterior, objective derivatives and relevance
//! indicators for a GMM approximation under a Gaussian ARD prior.
//!
//! For kernel `k` with questionable block `(mu_a, S_a)` and ARD precision
//! `A = diag(alpha)`, everything follows from `B = S_a + A^-1`:
//!
//! * kernel evidence `a N(mu_a | 0, B)`, combined with log-sum-exp,
//! * posterior block means `m_a = A^-1 B^-1 mu_a` and covariance
//!   `P_a = S_a B^-1 A^-1`,
//! * the derivative factors `v_i = (G_ii - b_i^2) / (2 alpha_i)` with
//!   `G = B^-1`, `b = G mu_a`, which equal `-(-1 + alpha_i P_ii + alpha_i m_i^2)/2`.
//!
//! The `G`/`b` forms avoid the cancellation in `S_a - S_a B^-1 S_a` once
//! `alpha` reaches the edges of the working box.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{self, GmmApproximation, KernelCovariances, KernelDocument, ParameterPartition};
use crate::linalg;

/// Bound on `|log alpha_i|`.
pub const LOG_ALPHA_BOX: f64 = 50.0;

/// Default `log r_i = log s_i` for the Gamma hyperprior.
pub const DEFAULT_LOG_HYPER: f64 = -6.0;

/// Default relevance tolerance.
pub const DEFAULT_GAMMA_TOL: f64 = 0.1;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gamma hyperprior on each ARD precision, in shape/rate form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    shape: Vec<f64>,
    rate: Vec<f64>,
}

impl HyperPrior {
    pub fn new(shape: Vec<f64>, rate: Vec<f64>) -> Result<Self> {
        if shape.len() != rate.len() {
            return Err(Error::invalid("hyperprior shape and rate lengths differ"));
        }
        if shape.iter().chain(&rate).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("hyperprior shape and rate must be positive and finite"));
        }
        Ok(Self { shape, rate })
    }

    /// `r_i = exp(log_shape)`, `s_i = exp(log_rate)` for every coordinate.
    pub fn from_logs(n_alpha: usize, log_shape: f64, log_rate: f64) -> Result<Self> {
        Self::new(vec![log_shape.exp(); n_alpha], vec![log_rate.exp(); n_alpha])
    }

    /// The `log r = log s = -6` setting.
    pub fn default_for(n_alpha: usize) -> Self {
        Self::from_logs(n_alpha, DEFAULT_LOG_HYPER, DEFAULT_LOG_HYPER).expect("positive defaults")
    }

    /// Shape and rate set to zero: the Jeffreys limit, where the objective is
    /// the log evidence alone.
    pub fn jeffreys_limit(n_alpha: usize) -> Self {
        Self {
            shape: vec![0.0; n_alpha],
            rate: vec![0.0; n_alpha],
        }
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn shape(&self) -> &[f64] {
        &self.shape
    }

    pub fn rate(&self) -> &[f64] {
        &self.rate
    }

    /// `sum_i (r_i log alpha_i - s_i alpha_i)`.
    pub fn log_density_terms(&self, la: &LogAlpha) -> f64 {
        la.values()
            .iter()
            .enumerate()
            .map(|(i, &l)| self.shape[i] * l - self.rate[i] * l.exp())
            .sum()
    }
}

/// Log ARD precisions, bounded to the working box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogAlpha(Vec<f64>);

impl LogAlpha {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("log alpha must have at least one entry"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || v.abs() > LOG_ALPHA_BOX) {
            return Err(Error::invalid(format!(
                "log alpha entry {v} outside the working box [-{LOG_ALPHA_BOX}, {LOG_ALPHA_BOX}]"
            )));
        }
        Ok(Self(values))
    }

    /// Clamp into the working box. The flag reports whether any entry moved.
    /// Non-finite entries are rejected.
    pub fn clamped(values: Vec<f64>) -> Result<(Self, bool)> {
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("log alpha contains NaN"));
        }
        let mut moved = false;
        let clamped = values
            .into_iter()
            .map(|v| {
                let c = v.clamp(-LOG_ALPHA_BOX, LOG_ALPHA_BOX);
                moved |= c != v;
                c
            })
            .collect();
        Ok((Self::new(clamped)?, moved))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.0.iter().map(|v| v.exp()).collect()
    }
}

/// Per-kernel evidence quantities.
#[derive(Clone, Debug)]
pub struct KernelEvidence {
    /// `B = Sigma_a + A^-1`.
    pub b_alpha: DMatrix<f64>,
    pub log_det_b: f64,
    /// Posterior mean of the questionable block.
    pub m_alpha: DVector<f64>,
    /// Posterior covariance of the questionable block.
    pub p_alpha: DMatrix<f64>,
    /// `log(a N(mu_a | 0, B))`.
    pub log_kernel_evidence: f64,
    /// Normalized posterior mixture weight.
    pub weight: f64,
    /// `diag(B^-1)`.
    pub(crate) g_diag: Vec<f64>,
    /// `B^-1 mu_a`.
    pub(crate) b_mu: DVector<f64>,
}

/// Shared factorization for one kernel covariance.
struct Factor {
    b: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    g: DMatrix<f64>,
    log_det_b: f64,
    p_alpha: DMatrix<f64>,
    cross: DMatrix<f64>,
    sigma_rel: DMatrix<f64>,
}

impl Factor {
    fn new(cov: &DMatrix<f64>, partition: &ParameterPartition, alpha: &[f64], kernel: usize) -> Result<Self> {
        let q = partition.questionable();
        let r = partition.relevant();
        let sigma_alpha = gmm::select_block(cov, q, q);
        let mut b = sigma_alpha.clone();
        for (i, a) in alpha.iter().enumerate() {
            b[(i, i)] += 1.0 / a;
        }
        let chol = linalg::cholesky(&b, &format!("B_alpha of kernel {kernel}"))?;
        let log_det_b = linalg::log_det(&chol);
        let mut g = chol.inverse();
        linalg::symmetrize(&mut g);
        // P_a = Sigma_a B^-1 A^-1
        let mut p_alpha = &sigma_alpha * &g;
        for (j, a) in alpha.iter().enumerate() {
            p_alpha.column_mut(j).scale_mut(1.0 / a);
        }
        linalg::symmetrize(&mut p_alpha);
        Ok(Self {
            b,
            chol,
            g,
            log_det_b,
            p_alpha,
            cross: gmm::select_block(cov, q, r),
            sigma_rel: gmm::select_block(cov, r, r),
        })
    }
}

/// Evidence terms for every kernel at one hyperparameter point.
#[derive(Clone, Debug)]
pub struct EvidenceTerms {
    pub log_alpha: LogAlpha,
    pub log_evidence: f64,
    pub kernels: Vec<KernelEvidence>,
}

impl EvidenceTerms {
    pub fn weights(&self) -> Vec<f64> {
        self.kernels.iter().map(|k| k.weight).collect()
    }
}

fn check_dims(gmm: &GmmApproximation, la: &LogAlpha) -> Result<()> {
    if gmm.partition().n_alpha() != la.len() {
        return Err(Error::invalid(format!(
            "mixture has {} questionable parameters but log alpha has {}",
            gmm.partition().n_alpha(),
            la.len()
        )));
    }
    Ok(())
}

/// Factorizations indexed by kernel (shared covariances factorize once).
fn factors(gmm: &GmmApproximation, alpha: &[f64]) -> Result<(Vec<Factor>, Vec<usize>)> {
    match gmm.covariances() {
        KernelCovariances::Shared(c) => Ok((
            vec![Factor::new(c, gmm.partition(), alpha, 0)?],
            vec![0; gmm.n_kernels()],
        )),
        KernelCovariances::PerKernel(cs) => {
            let fs = cs
                .iter()
                .enumerate()
                .map(|(k, c)| Factor::new(c, gmm.partition(), alpha, k))
                .collect::<Result<Vec<_>>>()?;
            Ok((fs, (0..gmm.n_kernels()).collect()))
        }
    }
}

fn evidence_with_factors(
    gmm: &GmmApproximation,
    la: &LogAlpha,
) -> Result<(EvidenceTerms, Vec<Factor>, Vec<usize>)> {
    check_dims(gmm, la)?;
    let alpha = la.alpha();
    let (factors, index) = factors(gmm, &alpha)?;
    let q = gmm.partition().questionable();
    let n = q.len() as f64;
    let mut kernels = Vec::with_capacity(gmm.n_kernels());
    for k in 0..gmm.n_kernels() {
        let f = &factors[index[k]];
        let mu_a = gmm::select_vec(&gmm.means()[k], q);
        let b_mu = f.chol.solve(&mu_a);
        let quad = mu_a.dot(&b_mu);
        let log_kernel_evidence = gmm.weights()[k].ln() - 0.5 * (n * LN_2PI + f.log_det_b + quad);
        let m_alpha = DVector::from_iterator(b_mu.len(), b_mu.iter().zip(&alpha).map(|(b, a)| b / a));
        kernels.push(KernelEvidence {
            b_alpha: f.b.clone(),
            log_det_b: f.log_det_b,
            m_alpha,
            p_alpha: f.p_alpha.clone(),
            log_kernel_evidence,
            weight: 0.0,
            g_diag: f.g.diagonal().iter().copied().collect(),
            b_mu,
        });
    }
    let logs: Vec<f64> = kernels.iter().map(|k| k.log_kernel_evidence).collect();
    let log_evidence = linalg::log_sum_exp(&logs);
    if !log_evidence.is_finite() {
        return Err(Error::Evaluation(format!("log evidence is {log_evidence}")));
    }
    for k in kernels.iter_mut() {
        k.weight = (k.log_kernel_evidence - log_evidence).exp();
    }
    Ok((
        EvidenceTerms {
            log_alpha: la.clone(),
            log_evidence,
            kernels,
        },
        factors,
        index,
    ))
}

/// Log evidence `log sum_k a_k N(mu_a^k | 0, Sigma_a^k + A^-1)` and the
/// per-kernel terms behind it.
pub fn log_evidence(gmm: &GmmApproximation, la: &LogAlpha) -> Result<(f64, EvidenceTerms)> {
    let (terms, _, _) = evidence_with_factors(gmm, la)?;
    Ok((terms.log_evidence, terms))
}

/// Posterior mixture over the full parameter vector.
#[derive(Clone, Debug)]
pub struct PosteriorGmm {
    pub partition: ParameterPartition,
    pub log_alpha: LogAlpha,
    pub weights: Vec<f64>,
    pub m_alpha: Vec<DVector<f64>>,
    pub m_rel: Vec<DVector<f64>>,
    pub p_alpha: Vec<DMatrix<f64>>,
    pub p_rel: Vec<DMatrix<f64>>,
    /// Cross covariance of questionable and relevant blocks, `N_alpha x N_rel`.
    pub cross: Vec<DMatrix<f64>>,
}

/// Posterior mixture at `la`.
///
/// Relevant-block quantities per kernel: `m_rel = mu_rel - C^T B^-1 mu_a`,
/// `P_rel = Sigma_rel - C^T B^-1 C` and cross covariance
/// `D = P_a Sigma_a^-1 C = A^-1 B^-1 C`.
pub fn posterior(gmm: &GmmApproximation, la: &LogAlpha) -> Result<PosteriorGmm> {
    let (terms, factors, index) = evidence_with_factors(gmm, la)?;
    let alpha = la.alpha();
    let r = gmm.partition().relevant();
    let mut rel_blocks: Vec<Option<(DMatrix<f64>, DMatrix<f64>)>> = (0..factors.len()).map(|_| None).collect();
    let mut out = PosteriorGmm {
        partition: gmm.partition().clone(),
        log_alpha: la.clone(),
        weights: Vec::with_capacity(gmm.n_kernels()),
        m_alpha: Vec::with_capacity(gmm.n_kernels()),
        m_rel: Vec::with_capacity(gmm.n_kernels()),
        p_alpha: Vec::with_capacity(gmm.n_kernels()),
        p_rel: Vec::with_capacity(gmm.n_kernels()),
        cross: Vec::with_capacity(gmm.n_kernels()),
    };
    for (k, ke) in terms.kernels.iter().enumerate() {
        let fi = index[k];
        let f = &factors[fi];
        if rel_blocks[fi].is_none() {
            let gc = &f.g * &f.cross;
            let mut p_rel = &f.sigma_rel - f.cross.transpose() * &gc;
            linalg::symmetrize(&mut p_rel);
            let mut d = gc;
            for (i, a) in alpha.iter().enumerate() {
                d.row_mut(i).scale_mut(1.0 / a);
            }
            rel_blocks[fi] = Some((p_rel, d));
        }
        let (p_rel, d) = rel_blocks[fi].as_ref().expect("filled above");
        let mu_rel = gmm::select_vec(&gmm.means()[k], r);
        out.weights.push(ke.weight);
        out.m_alpha.push(ke.m_alpha.clone());
        out.m_rel.push(mu_rel - f.cross.transpose() * &ke.b_mu);
        out.p_alpha.push(ke.p_alpha.clone());
        out.p_rel.push(p_rel.clone());
        out.cross.push(d.clone());
    }
    Ok(out)
}

impl PosteriorGmm {
    pub fn n_kernels(&self) -> usize {
        self.weights.len()
    }

    /// Full kernel `k` in original coordinate order, weighted by `w_k`.
    pub fn kernel(&self, k: usize) -> gmm::GaussianKernel {
        gmm::PartitionedKernel {
            weight: self.weights[k],
            mean_alpha: self.m_alpha[k].clone(),
            mean_rel: self.m_rel[k].clone(),
            cov_alpha: self.p_alpha[k].clone(),
            cov_rel: self.p_rel[k].clone(),
            cross_cov: self.cross[k].clone(),
        }
        .assemble(&self.partition)
    }

    /// `(mean, variance)` of coordinate `coord` (original ordering) in kernel `k`.
    fn coord_moments(&self, k: usize, coord: usize) -> (f64, f64) {
        if let Some(a) = self.partition.questionable().iter().position(|&i| i == coord) {
            (self.m_alpha[k][a], self.p_alpha[k][(a, a)])
        } else {
            let b = self
                .partition
                .relevant()
                .iter()
                .position(|&i| i == coord)
                .expect("coordinate belongs to the partition");
            (self.m_rel[k][b], self.p_rel[k][(b, b)])
        }
    }

    /// Marginal pdf of one coordinate.
    pub fn marginal_pdf(&self, coord: usize, x: f64) -> f64 {
        (0..self.n_kernels())
            .map(|k| {
                let (m, v) = self.coord_moments(k, coord);
                self.weights[k] * gmm::normal_pdf(x, m, v)
            })
            .sum()
    }

    pub fn marginal_moments(&self, coord: usize) -> (f64, f64) {
        let comps = (0..self.n_kernels()).map(|k| {
            let (m, v) = self.coord_moments(k, coord);
            (self.weights[k], m, v)
        });
        gmm::mixture_moments(comps)
    }

    /// Log marginal density of a subset of coordinates (original ordering).
    pub fn marginal_log_density(&self, coords: &[usize], x: &[f64]) -> Result<f64> {
        if coords.len() != x.len() {
            return Err(Error::invalid("coordinate list and point differ in length"));
        }
        let mut logs = Vec::with_capacity(self.n_kernels());
        for k in 0..self.n_kernels() {
            if self.weights[k] == 0.0 {
                continue;
            }
            let kernel = self.kernel(k);
            let mean = gmm::select_vec(&kernel.mean, coords);
            let cov = gmm::select_block(&kernel.covariance, coords, coords);
            logs.push(self.weights[k].ln() + linalg::log_gaussian_density(x, mean.as_slice(), &cov)?);
        }
        Ok(linalg::log_sum_exp(&logs))
    }

    /// Log density of the full parameter vector.
    pub fn log_density(&self, phi: &[f64]) -> Result<f64> {
        let all: Vec<usize> = (0..self.partition.total_dim()).collect();
        self.marginal_log_density(&all, phi)
    }

    /// Serialize as a `gmm-v1` document whose kernel weights are the posterior
    /// mixture weights.
    pub fn to_document(&self) -> gmm::GmmDocument {
        gmm::GmmDocument {
            version: gmm::GMM_VERSION.to_string(),
            partition: self.partition.clone(),
            kernels: (0..self.n_kernels())
                .map(|k| {
                    let kernel = self.kernel(k);
                    KernelDocument {
                        weight: kernel.weight,
                        mean: kernel.mean.iter().copied().collect(),
                        cov: gmm::row_major(&kernel.covariance),
                    }
                })
                .collect(),
            kde: None,
        }
    }
}

/// Objective value, gradient and Hessian at one point.
#[derive(Clone, Debug)]
pub struct ObjectiveEval {
    pub log_alpha: LogAlpha,
    pub value: f64,
    pub log_evidence: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    /// `v[k][i]`: derivative of `log N(mu_a^k | 0, B^k)` w.r.t. `log alpha_i`.
    pub v: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// `gamma_i^rms`.
    pub gamma_rms: Vec<f64>,
}

/// How `v_bar_i` in the weight derivative is averaged over kernels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum VBarMode {
    /// Posterior-weight average; consistent with `sum_k dw_k = 0`.
    #[default]
    Weighted,
    /// Plain mean over kernels, kept for comparison only.
    Unweighted,
}

fn check_hyper(la: &LogAlpha, hp: &HyperPrior) -> Result<()> {
    if hp.len() != la.len() {
        return Err(Error::invalid(format!(
            "hyperprior has {} entries, log alpha {}",
            hp.len(),
            la.len()
        )));
    }
    Ok(())
}

/// `L(log alpha) = log evidence + sum_i (r_i log alpha_i - s_i alpha_i)`.
pub fn objective(gmm: &GmmApproximation, la: &LogAlpha, hp: &HyperPrior) -> Result<f64> {
    check_hyper(la, hp)?;
    let (le, _) = log_evidence(gmm, la)?;
    Ok(le + hp.log_density_terms(la))
}

pub fn gradient(gmm: &GmmApproximation, la: &LogAlpha, hp: &HyperPrior) -> Result<DVector<f64>> {
    Ok(evaluate(gmm, la, hp)?.gradient)
}

pub fn hessian(gmm: &GmmApproximation, la: &LogAlpha, hp: &HyperPrior) -> Result<DMatrix<f64>> {
    Ok(evaluate(gmm, la, hp)?.hessian)
}

/// Objective, gradient and Hessian in one pass.
pub fn evaluate(gmm: &GmmApproximation, la: &LogAlpha, hp: &HyperPrior) -> Result<ObjectiveEval> {
    evaluate_with(gmm, la, hp, VBarMode::Weighted)
}

pub fn evaluate_with(gmm: &GmmApproximation, la: &LogAlpha, hp: &HyperPrior, mode: VBarMode) -> Result<ObjectiveEval> {
    check_hyper(la, hp)?;
    let (terms, factors, index) = evidence_with_factors(gmm, la)?;
    let alpha = la.alpha();
    let n = alpha.len();
    let kk = terms.kernels.len();

    let v: Vec<Vec<f64>> = terms
        .kernels
        .iter()
        .map(|ke| {
            (0..n)
                .map(|i| 0.5 * (ke.g_diag[i] - ke.b_mu[i] * ke.b_mu[i]) / alpha[i])
                .collect()
        })
        .collect();
    let weights = terms.weights();
    let v_bar: Vec<f64> = (0..n)
        .map(|i| match mode {
            VBarMode::Weighted => (0..kk).map(|k| weights[k] * v[k][i]).sum(),
            VBarMode::Unweighted => (0..kk).map(|k| v[k][i]).sum::<f64>() / kk as f64,
        })
        .collect();

    let mut grad = DVector::zeros(n);
    for i in 0..n {
        grad[i] = (0..kk).map(|k| weights[k] * v[k][i]).sum::<f64>() + hp.shape()[i] - hp.rate()[i] * alpha[i];
    }

    // dv_j/dlog a_i = -delta_ij v_i + (G_ij^2 / 2 - b_i b_j G_ij) / (alpha_i alpha_j)
    // dw/dlog a_i   = w (v_i - v_bar_i)
    let mut hess = DMatrix::zeros(n, n);
    for k in 0..kk {
        let g = &factors[index[k]].g;
        let b = &terms.kernels[k].b_mu;
        let w = weights[k];
        if w == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in i..n {
                let gi = g[(i, j)] / alpha[i];
                let gj = g[(i, j)] / alpha[j];
                let mut dv = 0.5 * gi * gj - (b[i] / alpha[i]) * (b[j] / alpha[j]) * g[(i, j)];
                if i == j {
                    dv -= v[k][i];
                }
                let h = w * dv + v[k][j] * w * (v[k][i] - v_bar[i]);
                hess[(i, j)] += h;
            }
        }
    }
    for i in 0..n {
        hess[(i, i)] -= hp.rate()[i] * alpha[i];
        for j in 0..i {
            hess[(i, j)] = hess[(j, i)];
        }
    }

    let gamma_rms = gamma_rms_from(&terms);
    Ok(ObjectiveEval {
        log_alpha: la.clone(),
        value: terms.log_evidence + hp.log_density_terms(la),
        log_evidence: terms.log_evidence,
        gradient: grad,
        hessian: hess,
        v,
        weights,
        gamma_rms,
    })
}

fn kernel_gammas(terms: &EvidenceTerms) -> Vec<Vec<f64>> {
    let alpha = terms.log_alpha.alpha();
    terms
        .kernels
        .iter()
        .map(|ke| {
            ke.g_diag
                .iter()
                .zip(&alpha)
                .map(|(g, a)| (g / a).clamp(0.0, 1.0))
                .collect()
        })
        .collect()
}

fn gamma_rms_from(terms: &EvidenceTerms) -> Vec<f64> {
    let per_kernel = kernel_gammas(terms);
    let kk = per_kernel.len() as f64;
    (0..terms.log_alpha.len())
        .map(|i| {
            let ms = per_kernel.iter().map(|g| g[i] * g[i]).sum::<f64>() / kk;
            ms.sqrt().clamp(0.0, 1.0)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Relevant,
    Irrelevant,
    Borderline,
}

impl Verdict {
    pub fn from_gamma(gamma_rms: f64, gamma_tol: f64) -> Self {
        if gamma_rms >= 1.0 - gamma_tol {
            Verdict::Relevant
        } else if gamma_rms <= gamma_tol {
            Verdict::Irrelevant
        } else {
            Verdict::Borderline
        }
    }
}

/// Relevance indicators for each questionable parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceReport {
    /// `gamma[k][i]`, clamped to `[0, 1]`.
    pub per_kernel: Vec<Vec<f64>>,
    pub gamma_rms: Vec<f64>,
    pub gamma_tol: f64,
    pub verdicts: Vec<Verdict>,
}

/// Relevance indicators `gamma_i^k = 1 - alpha_i P_ii^k` and their RMS over
/// kernels. `gamma_i^k` is evaluated as `(B^-1)_ii / alpha_i`.
pub fn relevance(et: &EvidenceTerms, gamma_tol: f64) -> RelevanceReport {
    let per_kernel = kernel_gammas(et);
    let gamma_rms = gamma_rms_from(et);
    let verdicts = gamma_rms.iter().map(|&g| Verdict::from_gamma(g, gamma_tol)).collect();
    RelevanceReport {
        per_kernel,
        gamma_rms,
        gamma_tol,
        verdicts,
    }
}

/// One row of an evaluation trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub log_alpha: Vec<f64>,
    pub objective: f64,
    pub log_evidence: f64,
    pub gradient: Vec<f64>,
    pub gamma_rms: Vec<f64>,
}

impl From<&ObjectiveEval> for TraceRow {
    fn from(e: &ObjectiveEval) -> Self {
        Self {
            log_alpha: e.log_alpha.values().to_vec(),
            objective: e.value,
            log_evidence: e.log_evidence,
            gradient: e.gradient.iter().copied().collect(),
            gamma_rms: e.gamma_rms.clone(),
        }
    }
}

/// Write evaluation rows as CSV with columns `log_alpha_*`, `objective`,
/// `log_evidence`, `grad_*`, `gamma_rms_*`; `*` is the questionable
/// parameter name.
pub fn write_evaluation_trace<W: Write>(out: W, names: &[String], rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = names.iter().map(|n| format!("log_alpha_{n}")).collect();
    header.push("objective".into());
    header.push("log_evidence".into());
    header.extend(names.iter().map(|n| format!("grad_{n}")));
    header.extend(names.iter().map(|n| format!("gamma_rms_{n}")));
    w.write_record(&header)?;
    for row in rows {
        let mut rec: Vec<String> = row.log_alpha.iter().map(|v| v.to_string()).collect();
        rec.push(row.objective.to_string());
        rec.push(row.log_evidence.to_string());
        rec.extend(row.gradient.iter().map(|v| v.to_string()));
        rec.extend(row.gamma_rms.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
