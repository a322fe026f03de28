//! Modified-Newton maximization of the hyperparameter objective over
//! `log alpha`, with a multistart driver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::GmmApproximation;
use crate::nsbl::{self, HyperPrior, LogAlpha, ObjectiveEval, TraceRow, LOG_ALPHA_BOX};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub grad_tol: f64,
    pub objective_tol: f64,
    pub max_iterations: usize,
    pub min_step: f64,
    pub armijo_c: f64,
    pub trust_radius: f64,
    pub max_trust_radius: f64,
    /// Eigenvalues of `-H` are floored at `eigen_floor * max |lambda|`.
    pub eigen_floor: f64,
    /// Infinity-norm radius for grouping optima from different starts.
    pub cluster_radius: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            objective_tol: 1e-10,
            max_iterations: 100,
            min_step: 1e-8,
            armijo_c: 1e-4,
            trust_radius: 2.0,
            max_trust_radius: 10.0,
            eigen_floor: 1e-8,
            cluster_radius: 0.5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.grad_tol,
            self.objective_tol,
            self.min_step,
            self.armijo_c,
            self.trust_radius,
            self.max_trust_radius,
            self.eigen_floor,
            self.cluster_radius,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("optimizer tolerances and radii must be positive"));
        }
        if self.max_iterations == 0 || self.trust_radius > self.max_trust_radius || self.armijo_c >= 1.0 {
            return Err(Error::invalid("inconsistent optimizer settings"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    ObjectiveStall,
    StepTooSmall,
    MaxIterations,
    /// An objective evaluation failed; the trace ends at the last good iterate.
    EvaluationFailed,
}

/// Objective, gradient and Hessian over `log alpha`.
pub trait Objective: Sync {
    fn evaluate(&self, x: &LogAlpha) -> Result<ObjectiveEval>;
}

/// The NSBL objective for a fixed mixture and hyperprior.
pub struct NsblObjective<'a> {
    pub gmm: &'a GmmApproximation,
    pub hyperprior: &'a HyperPrior,
}

impl<'a> NsblObjective<'a> {
    pub fn new(gmm: &'a GmmApproximation, hyperprior: &'a HyperPrior) -> Self {
        Self { gmm, hyperprior }
    }
}

impl Objective for NsblObjective<'_> {
    fn evaluate(&self, x: &LogAlpha) -> Result<ObjectiveEval> {
        nsbl::evaluate(self.gmm, x, self.hyperprior)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub log_alpha: Vec<f64>,
    pub objective: f64,
    pub log_evidence: f64,
    pub gradient: Vec<f64>,
    pub gamma_rms: Vec<f64>,
    /// Accepted line-search fraction (zero for the starting point).
    pub step_fraction: f64,
}

impl From<&IterationRecord> for TraceRow {
    fn from(r: &IterationRecord) -> Self {
        TraceRow {
            log_alpha: r.log_alpha.clone(),
            objective: r.objective,
            log_evidence: r.log_evidence,
            gradient: r.gradient.clone(),
            gamma_rms: r.gamma_rms.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub start: Vec<f64>,
    pub log_alpha: LogAlpha,
    pub objective: f64,
    pub log_evidence: f64,
    pub gradient: Vec<f64>,
    pub gamma_rms: Vec<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub converged: bool,
    /// Whether any iterate was clamped to the working box.
    pub hit_box: bool,
    pub trace: Vec<IterationRecord>,
    /// Message of the evaluation error that ended the run, if any.
    pub failure: Option<String>,
}

fn record(iteration: usize, e: &ObjectiveEval, step_fraction: f64) -> IterationRecord {
    IterationRecord {
        iteration,
        log_alpha: e.log_alpha.values().to_vec(),
        objective: e.value,
        log_evidence: e.log_evidence,
        gradient: e.gradient.iter().copied().collect(),
        gamma_rms: e.gamma_rms.clone(),
        step_fraction,
    }
}

/// Gradient with components zeroed where the iterate sits on the box and the
/// gradient points outward.
fn projected_gradient(e: &ObjectiveEval) -> DVector<f64> {
    let x = e.log_alpha.values();
    DVector::from_iterator(
        x.len(),
        e.gradient.iter().zip(x).map(|(&g, &xi)| {
            if (xi >= LOG_ALPHA_BOX && g > 0.0) || (xi <= -LOG_ALPHA_BOX && g < 0.0) {
                0.0
            } else {
                g
            }
        }),
    )
}

/// Ascent direction `(-H)_+^-1 g` with the eigenvalue modification.
fn newton_direction(e: &ObjectiveEval, floor: f64) -> DVector<f64> {
    let neg_h: DMatrix<f64> = -&e.hessian;
    let eig = SymmetricEigen::new(neg_h);
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let lo = if max_abs > 0.0 { floor * max_abs } else { 1.0 };
    let mut coeffs = eig.eigenvectors.transpose() * &e.gradient;
    for (c, l) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c /= l.abs().max(lo);
    }
    &eig.eigenvectors * coeffs
}

/// Maximize the objective from `start`.
pub fn maximize<O: Objective + ?Sized>(objective: &O, start: &LogAlpha, cfg: &OptimizerConfig) -> Result<OptimizationResult> {
    cfg.validate()?;
    let mut current = objective.evaluate(start)?;
    let mut failure = None;
    let mut trace = vec![record(0, &current, 0.0)];
    let mut trust = cfg.trust_radius;
    let mut hit_box = false;
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iterations {
        if projected_gradient(&current).norm() < cfg.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        iterations = iter;
        let mut dir = newton_direction(&current, cfg.eigen_floor);
        let len = dir.norm();
        let capped = len > trust;
        if capped {
            dir *= trust / len;
        }
        let x = DVector::from_column_slice(current.log_alpha.values());
        let mut beta = 1.0;
        let accepted = loop {
            let (cand, clamped) = LogAlpha::clamped((&x + &dir * beta).iter().copied().collect())?;
            let moved = DVector::from_column_slice(cand.values()) - &x;
            let predicted = current.gradient.dot(&moved);
            if moved.amax() > 0.0 {
                match objective.evaluate(&cand) {
                    Ok(e) if e.value.is_finite() && e.value >= current.value + cfg.armijo_c * predicted => {
                        hit_box |= clamped;
                        break Some(e);
                    }
                    Ok(_) | Err(Error::Singular { .. }) => {}
                    Err(err) => {
                        failure = Some(err.to_string());
                        break None;
                    }
                }
            }
            beta *= 0.5;
            if beta < cfg.min_step {
                break None;
            }
        };
        let Some(next) = accepted else {
            stop = if failure.is_some() {
                StopReason::EvaluationFailed
            } else {
                StopReason::StepTooSmall
            };
            break;
        };
        if beta == 1.0 && capped {
            trust = (2.0 * trust).min(cfg.max_trust_radius);
        } else if beta < 1.0 {
            trust = (0.5 * trust).max(cfg.min_step);
        }
        let change = (next.value - current.value).abs();
        current = next;
        trace.push(record(iter, &current, beta));
        if projected_gradient(&current).norm() < cfg.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        if change < cfg.objective_tol {
            stop = StopReason::ObjectiveStall;
            break;
        }
    }

    Ok(OptimizationResult {
        start: start.values().to_vec(),
        log_alpha: current.log_alpha.clone(),
        objective: current.value,
        log_evidence: current.log_evidence,
        gradient: current.gradient.iter().copied().collect(),
        gamma_rms: current.gamma_rms.clone(),
        iterations,
        stop_reason: stop,
        converged: matches!(stop, StopReason::GradientTolerance | StopReason::ObjectiveStall),
        hit_box,
        trace,
        failure,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimumCluster {
    /// Indices into [`MultistartResult::runs`].
    pub members: Vec<usize>,
    /// Member with the largest objective.
    pub best: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultistartResult {
    pub runs: Vec<OptimizationResult>,
    pub clusters: Vec<OptimumCluster>,
    /// Index of the run with the largest objective.
    pub global: usize,
    /// Starts whose first evaluation failed, with the error message.
    pub failed_starts: Vec<(Vec<f64>, String)>,
}

impl MultistartResult {
    pub fn global_optimum(&self) -> &OptimizationResult {
        &self.runs[self.global]
    }
}

/// Run [`maximize`] from each start (in parallel) and group the optima.
pub fn multistart<O: Objective + ?Sized>(
    objective: &O,
    starts: &[LogAlpha],
    cfg: &OptimizerConfig,
) -> Result<MultistartResult> {
    if starts.is_empty() {
        return Err(Error::invalid("multistart needs at least one starting point"));
    }
    cfg.validate()?;
    let outcomes: Vec<Result<OptimizationResult>> =
        starts.par_iter().map(|s| maximize(objective, s, cfg)).collect();
    let mut runs = Vec::new();
    let mut failed_starts = Vec::new();
    for (start, outcome) in starts.iter().zip(outcomes) {
        match outcome {
            Ok(r) => runs.push(r),
            Err(e) => failed_starts.push((start.values().to_vec(), e.to_string())),
        }
    }
    if runs.is_empty() {
        let msgs: Vec<String> = failed_starts
            .iter()
            .map(|(s, e)| format!("start {s:?}: {e}"))
            .collect();
        return Err(Error::Optimization(format!("all starts failed; {}", msgs.join("; "))));
    }
    let clusters = cluster_optima(&runs, cfg.cluster_radius);
    let global = (0..runs.len())
        .max_by(|&a, &b| runs[a].objective.total_cmp(&runs[b].objective).then(b.cmp(&a)))
        .expect("non-empty");
    Ok(MultistartResult {
        runs,
        clusters,
        global,
        failed_starts,
    })
}

/// Regroup the runs of an existing result.
pub fn recluster(result: &MultistartResult, radius: f64) -> Vec<OptimumCluster> {
    cluster_optima(&result.runs, radius)
}

fn cluster_optima(runs: &[OptimizationResult], radius: f64) -> Vec<OptimumCluster> {
    let mut clusters: Vec<OptimumCluster> = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let near = clusters.iter_mut().find(|c| {
            let anchor = runs[c.members[0]].log_alpha.values();
            anchor
                .iter()
                .zip(run.log_alpha.values())
                .all(|(a, b)| (a - b).abs() <= radius)
        });
        match near {
            Some(c) => {
                c.members.push(i);
                if run.objective > runs[c.best].objective {
                    c.best = i;
                }
            }
            None => clusters.push(OptimumCluster {
                members: vec![i],
                best: i,
            }),
        }
    }
    clusters
}

/// Per-iteration trace with columns `iter, log_alpha_*, objective,
/// grad_norm, gamma_rms_*`.
pub fn write_run_trace<W: std::io::Write>(out: W, names: &[String], run: &OptimizationResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["iter".to_string()];
    header.extend(names.iter().map(|n| format!("log_alpha_{n}")));
    header.push("objective".into());
    header.push("grad_norm".into());
    header.extend(names.iter().map(|n| format!("gamma_rms_{n}")));
    w.write_record(&header)?;
    for r in &run.trace {
        let mut row = vec![r.iteration.to_string()];
        row.extend(r.log_alpha.iter().map(f64::to_string));
        row.push(r.objective.to_string());
        row.push(r.gradient.iter().map(|g| g * g).sum::<f64>().sqrt().to_string());
        row.extend(r.gamma_rms.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Objective along a uniform grid of `n` points on `[lo, hi]` for a single
/// questionable parameter.
pub fn sweep_1d(gmm: &GmmApproximation, hp: &HyperPrior, lo: f64, hi: f64, n: usize) -> Result<Vec<TraceRow>> {
    if gmm.partition().n_alpha() != 1 {
        return Err(Error::invalid("objective sweep needs exactly one questionable parameter"));
    }
    if n < 2 || !(hi > lo) {
        return Err(Error::invalid("sweep needs n >= 2 and hi > lo"));
    }
    (0..n)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let e = nsbl::evaluate(gmm, &LogAlpha::new(vec![x])?, hp)?;
            Ok(TraceRow::from(&e))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{GaussianKernel, ParameterPartition};
    use approx::assert_relative_eq;

    fn one_dim(mu: f64, var: f64) -> GmmApproximation {
        let k = GaussianKernel::new(1.0, DVector::from_vec(vec![mu]), DMatrix::from_element(1, 1, var)).unwrap();
        GmmApproximation::from_kernels(vec![k], ParameterPartition::new(1, vec![0]).unwrap()).unwrap()
    }

    fn la(v: &[f64]) -> LogAlpha {
        LogAlpha::new(v.to_vec()).unwrap()
    }

    /// Single Gaussian kernel, Jeffreys limit: log p = log N(mu | 0, S + 1/alpha)
    /// is maximized at 1/alpha = mu^2 - S when mu^2 > S.
    #[test]
    fn recovers_closed_form_optimum() {
        let g = one_dim(2.0, 0.5);
        let hp = HyperPrior::jeffreys_limit(1);
        let r = maximize(&NsblObjective::new(&g, &hp), &la(&[3.0]), &OptimizerConfig::default()).unwrap();
        assert!(r.converged, "{:?}", r.stop_reason);
        assert_relative_eq!(r.log_alpha.values()[0], -(3.5f64).ln(), epsilon = 1e-6);
    }

    #[test]
    fn objective_is_monotone_along_trace() {
        let g = one_dim(0.1, 1.0);
        let hp = HyperPrior::default_for(1);
        let r = maximize(&NsblObjective::new(&g, &hp), &la(&[-20.0]), &OptimizerConfig::default()).unwrap();
        assert!(r.converged);
        for w in r.trace.windows(2) {
            assert!(w[1].objective >= w[0].objective);
        }
        // Irrelevant parameter: the hyperprior caps alpha, gamma is small.
        assert!(r.gamma_rms[0] < 0.1, "{:?}", r.gamma_rms);
    }

    #[test]
    fn multistart_groups_matching_optima() {
        let g = one_dim(2.0, 0.05);
        let hp = HyperPrior::default_for(1);
        let starts = [la(&[-20.0]), la(&[-10.0]), la(&[0.0])];
        let m = multistart(&NsblObjective::new(&g, &hp), &starts, &OptimizerConfig::default()).unwrap();
        assert_eq!(m.runs.len(), 3);
        assert_eq!(m.clusters.len(), 1);
        assert_eq!(m.clusters[0].members, vec![0, 1, 2]);
        assert!(m.global_optimum().gamma_rms[0] > 0.9);
    }

    #[test]
    fn clustering_separates_distant_points() {
        let mk = |x: f64, obj: f64| OptimizationResult {
            start: vec![x],
            log_alpha: la(&[x]),
            objective: obj,
            log_evidence: obj,
            gradient: vec![0.0],
            gamma_rms: vec![0.5],
            iterations: 0,
            stop_reason: StopReason::GradientTolerance,
            converged: true,
            hit_box: false,
            trace: vec![],
            failure: None,
        };
        let runs = vec![mk(0.0, 1.0), mk(0.4, 2.0), mk(3.0, 0.0)];
        let c = cluster_optima(&runs, 0.5);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].members, vec![0, 1]);
        assert_eq!(c[0].best, 1);
    }

    #[test]
    fn sweep_requires_single_parameter() {
        let k = GaussianKernel::new(1.0, DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let g = GmmApproximation::from_kernels(vec![k], ParameterPartition::new(2, vec![0, 1]).unwrap()).unwrap();
        assert!(sweep_1d(&g, &HyperPrior::default_for(2), -25.0, 5.0, 10).is_err());
        let rows = sweep_1d(&one_dim(1.0, 1.0), &HyperPrior::default_for(1), -25.0, 5.0, 31).unwrap();
        assert_eq!(rows.len(), 31);
        assert_relative_eq!(rows[30].log_alpha[0], 5.0);
    }

    #[test]
    fn run_trace_columns() {
        let g = one_dim(2.0, 0.5);
        let hp = HyperPrior::default_for(1);
        let r = maximize(&NsblObjective::new(&g, &hp), &la(&[3.0]), &OptimizerConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_run_trace(&mut buf, &["e3".to_string()], &r).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iter,log_alpha_e3,objective,grad_norm,gamma_rms_e3");
        assert_eq!(lines.count(), r.trace.len());
    }

    #[test]
    fn config_validation() {
        let mut c = OptimizerConfig::default();
        assert!(c.validate().is_ok());
        c.trust_radius = 20.0;
        assert!(c.validate().is_err());
    }
}
