//! Delayed-rejection adaptive Metropolis (DRAM) and sample-set bookkeeping.
//!
//! Chains run in transformed coordinates by default: `log` for positive
//! supports, `logit` for bounded ones, identity otherwise, with the log
//! Jacobian added to the target. The proposal covariance is re-estimated
//! from the whole chain history every `adapt_interval` iterations; set
//! `adapt_stationary = false` to freeze it after burn-in.

use std::io::{Read, Write};

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Support of one coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Support {
    Unbounded,
    Positive,
    Bounded { lo: f64, hi: f64 },
}

impl Support {
    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Support::Unbounded => x.is_finite(),
            Support::Positive => x > 0.0 && x.is_finite(),
            Support::Bounded { lo, hi } => x >= lo && x <= hi,
        }
    }

    fn interior(&self, x: f64) -> bool {
        match *self {
            Support::Bounded { lo, hi } => x > lo && x < hi,
            s => s.contains(x),
        }
    }

    fn to_unbounded(&self, x: f64) -> f64 {
        match *self {
            Support::Unbounded => x,
            Support::Positive => x.ln(),
            Support::Bounded { lo, hi } => {
                let p = (x - lo) / (hi - lo);
                (p / (1.0 - p)).ln()
            }
        }
    }

    fn from_unbounded(&self, u: f64) -> f64 {
        match *self {
            Support::Unbounded => u,
            Support::Positive => u.exp(),
            Support::Bounded { lo, hi } => lo + (hi - lo) / (1.0 + (-u).exp()),
        }
    }

    /// `log |dx/du|`.
    fn log_jacobian(&self, u: f64) -> f64 {
        let softplus = |v: f64| if v > 0.0 { v + (-v).exp().ln_1p() } else { v.exp().ln_1p() };
        match *self {
            Support::Unbounded => 0.0,
            Support::Positive => u,
            Support::Bounded { lo, hi } => (hi - lo).ln() - softplus(-u) - softplus(u),
        }
    }
}

/// Unnormalized log density with per-coordinate supports. Must return
/// `-inf` outside the support.
pub trait TargetDensity: Sync {
    fn supports(&self) -> &[Support];
    fn log_density(&self, x: &[f64]) -> f64;

    fn dim(&self) -> usize {
        self.supports().len()
    }
}

/// Closure-backed target.
pub struct FnTarget<F> {
    supports: Vec<Support>,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnTarget<F> {
    pub fn new(supports: Vec<Support>, f: F) -> Self {
        Self { supports, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> TargetDensity for FnTarget<F> {
    fn supports(&self) -> &[Support] {
        &self.supports
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    /// Post burn-in iterations.
    pub n_stationary: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Iterations between covariance updates.
    pub adapt_interval: usize,
    /// Keep adapting after burn-in (adaptive Metropolis with diminishing
    /// adaptation) instead of freezing the proposal.
    pub adapt_stationary: bool,
    /// Standard-deviation scale of the delayed-rejection proposal.
    pub dr_scale: f64,
    pub seed: u64,
    /// Propose in transformed coordinates.
    pub transform: bool,
    /// Refine the initial point with Nelder-Mead before sampling.
    pub preoptimize: bool,
    /// Coordinates kept at their start value during that refinement.
    pub preoptimize_hold: Vec<usize>,
    pub nm_max_iters: u64,
    /// Initial proposal covariance (in the proposal coordinates). When absent
    /// it is the scaled inverse of a finite-difference Hessian at the start.
    pub initial_cov: Option<Vec<Vec<f64>>>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_stationary: 5000,
            burn_in: 5000,
            thin: 10,
            adapt_interval: 100,
            adapt_stationary: true,
            dr_scale: 0.25,
            seed: 0,
            transform: true,
            preoptimize: true,
            preoptimize_hold: Vec::new(),
            nm_max_iters: 3000,
            initial_cov: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.thin == 0 || self.n_stationary == 0 || self.adapt_interval == 0 {
            return Err(Error::invalid("n_stationary, thin and adapt_interval must be positive"));
        }
        if !(self.dr_scale > 0.0 && self.dr_scale < 1.0) {
            return Err(Error::invalid("dr_scale must lie in (0, 1)"));
        }
        if self.preoptimize_hold.iter().any(|&i| i >= dim) {
            return Err(Error::invalid(format!("held coordinates must be below {dim}")));
        }
        if let Some(c) = &self.initial_cov {
            if c.len() != dim || c.iter().any(|r| r.len() != dim) {
                return Err(Error::invalid(format!("initial covariance must be {dim}x{dim}")));
            }
        }
        Ok(())
    }

    pub fn n_retained(&self) -> usize {
        self.n_stationary / self.thin
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub seed: u64,
    pub acceptance_rate: f64,
    /// Fraction of iterations accepted at the delayed-rejection stage.
    pub dr_acceptance_rate: f64,
    pub n_evaluations: u64,
    pub burn_in: usize,
    pub n_stationary: usize,
    pub thin: usize,
    pub transformed: bool,
    /// Lag-1 autocorrelation per coordinate before thinning.
    pub lag1_raw: Vec<f64>,
    /// Lag-1 autocorrelation per coordinate after thinning.
    pub lag1_thinned: Vec<f64>,
    pub start: Vec<f64>,
    pub config_hash: Option<String>,
    /// `(index, count)` when this set is one block of a split.
    pub block: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub meta: SampleMeta,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// CSV with one header row of column names.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, meta: SampleMeta) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::invalid(format!("bad sample value `{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != columns.len() {
                return Err(Error::invalid("sample row length differs from header"));
            }
            rows.push(row);
        }
        Ok(Self { columns, rows, meta })
    }
}

/// Contiguous equal blocks in retained order.
pub fn split_sets(s: &SampleSet, n_sets: usize) -> Result<Vec<SampleSet>> {
    if n_sets == 0 || s.len() % n_sets != 0 {
        return Err(Error::invalid(format!(
            "{} samples cannot be split into {n_sets} equal sets",
            s.len()
        )));
    }
    let size = s.len() / n_sets;
    Ok(s.rows
        .chunks(size)
        .enumerate()
        .map(|(i, rows)| SampleSet {
            columns: s.columns.clone(),
            rows: rows.to_vec(),
            meta: SampleMeta {
                block: Some((i, n_sets)),
                ..s.meta.clone()
            },
        })
        .collect())
}

/// Lag-1 autocorrelation of a series (0 for constant series).
pub fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 3 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

/// The target seen by the random walk: either `x` itself or the transformed
/// coordinates with the Jacobian correction.
struct Walk<'a, T: TargetDensity + ?Sized> {
    target: &'a T,
    transform: bool,
    evaluations: std::cell::Cell<u64>,
}

impl<T: TargetDensity + ?Sized> Walk<'_, T> {
    fn to_x(&self, u: &[f64]) -> Vec<f64> {
        if self.transform {
            self.target
                .supports()
                .iter()
                .zip(u)
                .map(|(s, &v)| s.from_unbounded(v))
                .collect()
        } else {
            u.to_vec()
        }
    }

    fn to_u(&self, x: &[f64]) -> Vec<f64> {
        if self.transform {
            self.target
                .supports()
                .iter()
                .zip(x)
                .map(|(s, &v)| s.to_unbounded(v))
                .collect()
        } else {
            x.to_vec()
        }
    }

    fn log_density(&self, u: &[f64]) -> f64 {
        let x = self.to_x(u);
        let in_support = self.target.supports().iter().zip(&x).all(|(s, &v)| s.contains(v));
        if !in_support {
            return f64::NEG_INFINITY;
        }
        self.evaluations.set(self.evaluations.get() + 1);
        let mut lp = self.target.log_density(&x);
        if self.transform {
            lp += self
                .target
                .supports()
                .iter()
                .zip(u)
                .map(|(s, &v)| s.log_jacobian(v))
                .sum::<f64>();
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }
}

/// Negative walk density over the free coordinates of `base`.
struct NegLogDensity<'a, 'b, T: TargetDensity + ?Sized> {
    walk: &'a Walk<'b, T>,
    base: &'a [f64],
    free: &'a [usize],
}

impl<T: TargetDensity + ?Sized> NegLogDensity<'_, '_, T> {
    fn embed(&self, v: &[f64]) -> Vec<f64> {
        let mut u = self.base.to_vec();
        for (&i, &x) in self.free.iter().zip(v) {
            u[i] = x;
        }
        u
    }
}

impl<T: TargetDensity + ?Sized> CostFunction for NegLogDensity<'_, '_, T> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, v: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let lp = self.walk.log_density(&self.embed(v));
        Ok(if lp.is_finite() { -lp } else { f64::MAX })
    }
}

fn nelder_mead<T: TargetDensity + ?Sized>(
    walk: &Walk<'_, T>,
    u0: Vec<f64>,
    hold: &[usize],
    max_iters: u64,
) -> Result<Vec<f64>> {
    let free: Vec<usize> = (0..u0.len()).filter(|i| !hold.contains(i)).collect();
    if free.is_empty() {
        return Ok(u0);
    }
    let cost = || NegLogDensity {
        walk,
        base: &u0,
        free: &free,
    };
    let mut best: Vec<f64> = free.iter().map(|&i| u0[i]).collect();
    for _ in 0..2 {
        let mut simplex = vec![best.clone()];
        for i in 0..best.len() {
            let mut v = best.clone();
            v[i] += 0.05 * best[i].abs().max(1.0);
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-8)
            .map_err(|e| Error::Sampler(format!("Nelder-Mead setup: {e}")))?;
        let res = Executor::new(cost(), solver)
            .configure(|s| s.max_iters(max_iters))
            .run()
            .map_err(|e| Error::Sampler(format!("Nelder-Mead: {e}")))?;
        if let Some(p) = res.state().get_best_param() {
            best = p.clone();
        }
    }
    Ok(cost().embed(&best))
}

/// Inverse of the negated finite-difference Hessian of the walk density at
/// `u`, with eigenvalues made positive. Steps are sized so each coordinate
/// changes the log density by O(1).
fn laplace_covariance<T: TargetDensity + ?Sized>(walk: &Walk<'_, T>, u: &[f64]) -> Result<DMatrix<f64>> {
    let d = u.len();
    let f0 = walk.log_density(u);
    let eval = |du: &[(usize, f64)]| {
        let mut v = u.to_vec();
        for &(i, h) in du {
            v[i] += h;
        }
        walk.log_density(&v)
    };
    let mut h = vec![0.0; d];
    let mut diag = vec![0.0; d];
    for i in 0..d {
        let mut step = 1e-3 * u[i].abs().max(1.0);
        let mut second = 0.0;
        for _ in 0..60 {
            let c = eval(&[(i, step)]) + eval(&[(i, -step)]) - 2.0 * f0;
            if !c.is_finite() || c.abs() > 10.0 {
                step *= 0.25;
                continue;
            }
            second = c / (step * step);
            if c.abs() < 0.01 {
                step *= 4.0;
                continue;
            }
            break;
        }
        h[i] = step;
        diag[i] = second;
    }
    let mut hess = DMatrix::from_diagonal(&DVector::from_vec(diag));
    for i in 0..d {
        for j in 0..i {
            let (hi, hj) = (h[i], h[j]);
            let v = (eval(&[(i, hi), (j, hj)]) - eval(&[(i, hi), (j, -hj)]) - eval(&[(i, -hi), (j, hj)])
                + eval(&[(i, -hi), (j, -hj)]))
                / (4.0 * hi * hj);
            let v = if v.is_finite() { v } else { 0.0 };
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(-hess);
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    if !(max > 0.0) || !max.is_finite() {
        let fallback = DVector::from_iterator(d, h.iter().map(|s| s * s));
        return Ok(DMatrix::from_diagonal(&fallback));
    }
    let inv = eig.eigenvalues.map(|l| 1.0 / l.abs().max(1e-8 * max));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
}

/// Running mean and scatter of visited states.
struct Moments {
    n: f64,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

impl Moments {
    fn new(d: usize) -> Self {
        Self {
            n: 0.0,
            mean: DVector::zeros(d),
            scatter: DMatrix::zeros(d, d),
        }
    }

    fn push(&mut self, x: &DVector<f64>) {
        self.n += 1.0;
        let delta = x - &self.mean;
        self.mean += &delta / self.n;
        let delta2 = x - &self.mean;
        self.scatter += &delta * delta2.transpose();
    }

    fn covariance(&self) -> Option<DMatrix<f64>> {
        (self.n > 1.0).then(|| {
            let mut c = &self.scatter / (self.n - 1.0);
            linalg::symmetrize(&mut c);
            c
        })
    }
}

/// Run one DRAM chain from `start` and return the thinned stationary samples
/// (in the target's own coordinates).
pub fn run_chain<T: TargetDensity + ?Sized>(
    target: &T,
    start: &[f64],
    cfg: &ChainConfig,
    columns: Vec<String>,
) -> Result<SampleSet> {
    let d = target.dim();
    cfg.validate(d)?;
    if start.len() != d || columns.len() != d {
        return Err(Error::invalid(format!("start and column names must have {d} entries")));
    }
    let walk = Walk {
        target,
        transform: cfg.transform,
        evaluations: std::cell::Cell::new(0),
    };
    if cfg.transform && !target.supports().iter().zip(start).all(|(s, &x)| s.interior(x)) {
        return Err(Error::invalid("initial point must lie in the interior of the support"));
    }
    let mut u = walk.to_u(start);
    let mut lp = walk.log_density(&u);
    if !lp.is_finite() {
        return Err(Error::invalid(format!("initial point has log density {lp}")));
    }
    if cfg.preoptimize {
        let refined = nelder_mead(&walk, u.clone(), &cfg.preoptimize_hold, cfg.nm_max_iters)?;
        let lp_refined = walk.log_density(&refined);
        if lp_refined > lp {
            u = refined;
            lp = lp_refined;
        }
    }

    let scale = 2.4 * 2.4 / d as f64;
    let base_cov = match &cfg.initial_cov {
        Some(rows) => DMatrix::from_fn(d, d, |i, j| rows[i][j]),
        None => laplace_covariance(&walk, &u)? * scale,
    };
    let mut chol = linalg::cholesky(&base_cov, "initial proposal covariance")?.l();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = DVector::from_vec(u);
    let mut moments = Moments::new(d);
    let total = cfg.burn_in + cfg.n_stationary;
    let mut window_accepts = 0usize;
    let (mut accepted, mut dr_accepted) = (0usize, 0usize);
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_stationary);
    let mut chol_inv = chol.clone().try_inverse().ok_or_else(|| Error::singular("proposal factor"))?;

    for it in 0..total {
        let z1 = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y1 = &x + &chol * &z1;
        let lp1 = walk.log_density(y1.as_slice());
        let log_a1 = (lp1 - lp).min(0.0);
        let u1: f64 = rng.random();
        let mut moved = false;
        if lp1.is_finite() && u1.ln() < log_a1 {
            x = y1;
            lp = lp1;
            moved = true;
        } else {
            let z2 = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y2 = &x + &chol * &z2 * cfg.dr_scale;
            let lp2 = walk.log_density(y2.as_slice());
            if lp2.is_finite() {
                // Mira's second-stage ratio with a symmetric first-stage kernel.
                let a1_rev = (lp1 - lp2).min(0.0).exp();
                let a1_fwd = log_a1.exp();
                if a1_rev < 1.0 && a1_fwd < 1.0 {
                    let q = |from: &DVector<f64>| -0.5 * (&chol_inv * (&y1 - from)).norm_squared();
                    let log_a2 = lp2 + q(&y2) + (1.0 - a1_rev).ln() - lp - q(&x) - (1.0 - a1_fwd).ln();
                    let u2: f64 = rng.random();
                    if u2.ln() < log_a2.min(0.0) {
                        x = y2;
                        lp = lp2;
                        moved = true;
                        dr_accepted += 1;
                    }
                }
            }
        }
        if moved {
            accepted += 1;
            window_accepts += 1;
        }
        if it < cfg.burn_in || cfg.adapt_stationary {
            moments.push(&x);
            if (it + 1) % cfg.adapt_interval == 0 {
                if window_accepts == 0 && it < cfg.burn_in {
                    return Err(Error::Sampler(format!(
                        "no proposal accepted in iterations {}..{}",
                        it + 1 - cfg.adapt_interval,
                        it + 1
                    )));
                }
                window_accepts = 0;
                if let Some(c) = moments.covariance() {
                    let mut c = c * scale;
                    let jitter = 1e-10 * (c.trace() / d as f64).max(f64::MIN_POSITIVE);
                    for i in 0..d {
                        c[(i, i)] += jitter;
                    }
                    if let Ok(f) = linalg::cholesky(&c, "adapted proposal covariance") {
                        let l = f.l();
                        if let Some(li) = l.clone().try_inverse() {
                            chol = l;
                            chol_inv = li;
                        }
                    }
                }
            }
        }
        if it >= cfg.burn_in {
            raw.push(walk.to_x(x.as_slice()));
        }
    }

    let retained: Vec<Vec<f64>> = raw.iter().skip(cfg.thin - 1).step_by(cfg.thin).cloned().collect();
    let lag = |rows: &[Vec<f64>]| -> Vec<f64> {
        (0..d)
            .map(|j| lag1_autocorrelation(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
            .collect()
    };
    let meta = SampleMeta {
        seed: cfg.seed,
        acceptance_rate: accepted as f64 / total as f64,
        dr_acceptance_rate: dr_accepted as f64 / total as f64,
        n_evaluations: walk.evaluations.get(),
        burn_in: cfg.burn_in,
        n_stationary: cfg.n_stationary,
        thin: cfg.thin,
        transformed: cfg.transform,
        lag1_raw: lag(&raw),
        lag1_thinned: lag(&retained),
        start: start.to_vec(),
        config_hash: None,
        block: None,
    };
    Ok(SampleSet {
        columns,
        rows: retained,
        meta,
    })
}
