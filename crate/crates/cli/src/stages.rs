//! The four pipeline stages. Each reads verified upstream artifacts, writes
//! its own outputs atomically and returns the summary it persisted.

use std::path::Path;

use log::{info, warn};
use nsbl_core::aero::psd::{welch, Psd};
use nsbl_core::aero::{experiment, synthesize_observations, AeroSystem, ExperimentSpec, LikelihoodTarget, ObservationSeries, EXPERIMENT_IDS};
use nsbl_core::gmm::build_kde_gmm;
use nsbl_core::nsbl::{self, write_evaluation_trace, TraceRow};
use nsbl_core::optimizer::{self, multistart, NsblObjective, StopReason};
use nsbl_core::samplers::{run_chain, split_sets, SampleMeta, SampleSet};
use nsbl_core::{GmmApproximation, HyperPrior, LogAlpha, MultistartResult, PosteriorGmm, RelevanceReport, Verdict};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{RunLayout, Stage, StageWriter, Upstream};
use crate::config::Config;
use crate::error::{CliError, CliResult};

/// Acceptance-rate band outside of which the sample stage warns.
pub const ACCEPTANCE_BAND: (f64, f64) = (0.1, 0.6);

/// Objective sweep range for single-parameter experiments.
const SWEEP: (f64, f64, usize) = (-25.0, 5.0, 121);

/// Points per marginal grid segment.
const MARGINAL_POINTS: usize = 101;

/// Resolved configuration plus the run directory it maps to.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: Config,
    pub layout: RunLayout,
}

impl Context {
    pub fn new(config: Config, out: &Path) -> Self {
        let layout = RunLayout::new(out, &config.hash());
        Self { config, layout }
    }

    pub fn config_hash(&self) -> &str {
        &self.layout.config_hash
    }

    /// Chain seed of an experiment, derived from the run seed.
    pub fn chain_seed(&self, id: &str) -> u64 {
        let idx = EXPERIMENT_IDS.iter().position(|e| *e == id).unwrap_or(EXPERIMENT_IDS.len());
        self.config.seed.wrapping_add(1 + idx as u64)
    }
}

fn spec_for(id: &str) -> CliResult<ExperimentSpec> {
    experiment(id).map_err(|_| {
        CliError::config(
            "--experiment",
            format!("unknown experiment `{id}`; expected one of {}", EXPERIMENT_IDS.join(", ")),
        )
    })
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> nsbl_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

// ---------------------------------------------------------------- data

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataProvenance {
    pub config_hash: String,
    pub seed: u64,
    pub n_observations: usize,
    pub sample_rate_hz: f64,
    pub system: AeroSystem,
    pub dominant_frequency_hz: f64,
    /// Peak PSD over the largest PSD value above the cutoff, in dB.
    pub attenuation_db: Option<f64>,
}

pub struct DataOutput {
    pub observations: ObservationSeries,
    pub psd: Psd,
    pub provenance: DataProvenance,
}

pub fn generate_data(ctx: &Context) -> CliResult<DataOutput> {
    let cfg = &ctx.config;
    let mut w = StageWriter::begin(&ctx.layout, Stage::Data, None, cfg)?;
    let sim = cfg.data.simulation(cfg.seed);
    info!("simulating {} s of observations (seed {})", sim.duration_s, sim.seed);
    let obs = synthesize_observations(&cfg.data.system, &sim)?;
    let segment = cfg.data.psd_segment.min(obs.len());
    let psd = welch(&obs.pitch_rad, sim.observation_rate_hz, segment)?;
    let attenuation_db = sim
        .cutoff_hz
        .map(|fc| 10.0 * (psd.peak_power() / psd.max_power_above(fc)).log10());
    let provenance = DataProvenance {
        config_hash: ctx.config_hash().to_string(),
        seed: sim.seed,
        n_observations: obs.len(),
        sample_rate_hz: sim.observation_rate_hz,
        system: cfg.data.system.clone(),
        dominant_frequency_hz: psd.dominant_frequency(),
        attenuation_db,
    };
    w.write("observations.csv", &csv_bytes(|b| obs.write_csv(b))?)?;
    w.write("psd.csv", &csv_bytes(|b| psd.write_csv(b))?)?;
    w.write_json("provenance.json", &provenance)?;
    w.finish()?;
    info!(
        "wrote {} observations; dominant frequency {:.3} Hz",
        obs.len(),
        provenance.dominant_frequency_hz
    );
    Ok(DataOutput {
        observations: obs,
        psd,
        provenance,
    })
}

// ---------------------------------------------------------------- sample

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub experiment: String,
    pub columns: Vec<String>,
    pub instances: usize,
    pub per_instance: usize,
    pub files: Vec<String>,
    pub meta: SampleMeta,
}

pub struct SampleOutput {
    pub summary: SampleSummary,
    pub sets: Vec<SampleSet>,
}

fn instance_file(i: usize) -> String {
    format!("instance_{i:02}.csv")
}

/// Run the chain for `id` and split the retained draws into instances.
/// `instances` and `per_instance` override the config values.
pub fn sample(ctx: &Context, id: &str, instances: Option<usize>, per_instance: Option<usize>) -> CliResult<SampleOutput> {
    let cfg = &ctx.config;
    let spec = spec_for(id)?;
    let instances = instances.unwrap_or(cfg.mcmc.instances);
    let per_instance = per_instance.unwrap_or(cfg.mcmc.per_instance);
    if instances == 0 {
        return Err(CliError::config("--instances", "must be at least 1"));
    }
    if per_instance == 0 {
        return Err(CliError::config("--per-instance", "must be at least 1"));
    }
    let data = Upstream::open(&ctx.layout, Stage::Data, None)?;
    let obs = ObservationSeries::read_csv(data.read("observations.csv")?.as_slice())?;
    let mut w = StageWriter::begin(&ctx.layout, Stage::Sample, Some(id), cfg)?;
    w.record_upstream(&data);

    let target = LikelihoodTarget::new(&spec, &cfg.data.system, &obs, cfg.data.ekf());
    let chain = cfg.mcmc.chain(ctx.chain_seed(id), instances, per_instance, &spec.questionable());
    info!(
        "{id}: sampling {} stationary draws after {} burn-in (seed {})",
        chain.n_stationary, chain.burn_in, chain.seed
    );
    let mut set = run_chain(&target, &spec.initial_point(), &chain, spec.names())?;
    set.meta.config_hash = Some(ctx.config_hash().to_string());
    let rate = set.meta.acceptance_rate;
    if rate < ACCEPTANCE_BAND.0 || rate > ACCEPTANCE_BAND.1 {
        warn!(
            "{id}: acceptance rate {rate:.3} outside [{}, {}]",
            ACCEPTANCE_BAND.0, ACCEPTANCE_BAND.1
        );
    } else {
        info!("{id}: acceptance rate {rate:.3}");
    }
    let sets = split_sets(&set, instances)?;
    let mut files = Vec::with_capacity(sets.len());
    for (i, s) in sets.iter().enumerate() {
        let name = instance_file(i);
        w.write(&name, &csv_bytes(|b| s.write_csv(b))?)?;
        files.push(name);
    }
    let summary = SampleSummary {
        experiment: id.to_string(),
        columns: set.columns.clone(),
        instances,
        per_instance,
        files,
        meta: set.meta.clone(),
    };
    w.write_json("chain.json", &summary)?;
    w.finish()?;
    Ok(SampleOutput { summary, sets })
}

// ---------------------------------------------------------------- learn

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub start: Vec<f64>,
    pub log_alpha: Vec<f64>,
    pub objective: f64,
    pub log_evidence: f64,
    pub grad_norm: f64,
    pub gamma_rms: Vec<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub converged: bool,
    pub hit_box: bool,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub log_alpha: Vec<f64>,
    pub objective: f64,
    pub gamma_rms: Vec<f64>,
    pub verdicts: Vec<Verdict>,
    /// Indices of the runs (starts) that reached this optimum.
    pub members: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub starts: Vec<Vec<f64>>,
    pub runs: Vec<RunSummary>,
    /// Ordered by decreasing objective; the first is the global optimum.
    pub clusters: Vec<ClusterSummary>,
    pub failed_starts: Vec<(Vec<f64>, String)>,
}

impl GridOutcome {
    pub fn global(&self) -> &ClusterSummary {
        &self.clusters[0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamMoments {
    pub name: String,
    pub pre_mean: f64,
    pub pre_sd: f64,
    pub post_mean: f64,
    pub post_sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceLearn {
    pub index: usize,
    pub n_samples: usize,
    pub default_grid: GridOutcome,
    pub user_grid: Option<GridOutcome>,
    /// Relevance at the global optimum of the default grid.
    pub relevance: RelevanceReport,
    pub log_alpha: Vec<f64>,
    pub moments: Vec<ParamMoments>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnSummary {
    pub experiment: String,
    pub config_hash: String,
    pub params: Vec<String>,
    pub questionable: Vec<String>,
    pub gamma_tol: f64,
    pub instances: Vec<InstanceLearn>,
}

fn grid_outcome(result: &MultistartResult, starts: &[Vec<f64>], gamma_tol: f64) -> GridOutcome {
    let runs = result
        .runs
        .iter()
        .map(|r| RunSummary {
            start: r.start.clone(),
            log_alpha: r.log_alpha.values().to_vec(),
            objective: r.objective,
            log_evidence: r.log_evidence,
            grad_norm: r.gradient.iter().map(|g| g * g).sum::<f64>().sqrt(),
            gamma_rms: r.gamma_rms.clone(),
            iterations: r.iterations,
            stop_reason: r.stop_reason,
            converged: r.converged,
            hit_box: r.hit_box,
            failure: r.failure.clone(),
        })
        .collect();
    let mut clusters: Vec<ClusterSummary> = result
        .clusters
        .iter()
        .map(|c| {
            let best = &result.runs[c.best];
            ClusterSummary {
                log_alpha: best.log_alpha.values().to_vec(),
                objective: best.objective,
                gamma_rms: best.gamma_rms.clone(),
                verdicts: best.gamma_rms.iter().map(|&g| Verdict::from_gamma(g, gamma_tol)).collect(),
                members: c.members.clone(),
            }
        })
        .collect();
    clusters.sort_by(|a, b| b.objective.total_cmp(&a.objective));
    GridOutcome {
        starts: starts.to_vec(),
        runs,
        clusters,
        failed_starts: result.failed_starts.clone(),
    }
}

fn run_grid(
    ctx: &Context,
    gmm: &GmmApproximation,
    hp: &HyperPrior,
    starts: &[Vec<f64>],
    gamma_tol: f64,
) -> CliResult<(MultistartResult, GridOutcome)> {
    let la = starts
        .iter()
        .map(|s| LogAlpha::new(s.clone()))
        .collect::<nsbl_core::Result<Vec<_>>>()?;
    let result = multistart(&NsblObjective::new(gmm, hp), &la, &ctx.config.optimizer)?;
    let outcome = grid_outcome(&result, starts, gamma_tol);
    Ok((result, outcome))
}

/// Grid covering `mean +- 5 sd` of both the pre- and post-NSBL marginals.
fn marginal_grid(pre: (f64, f64), post: (f64, f64)) -> Vec<f64> {
    let mut xs = Vec::with_capacity(2 * MARGINAL_POINTS);
    for (m, v) in [pre, post] {
        let sd = v.max(0.0).sqrt();
        let half = if sd > 0.0 { 5.0 * sd } else { 1e-12_f64.max(m.abs() * 1e-9) };
        for i in 0..MARGINAL_POINTS {
            xs.push(m - half + 2.0 * half * i as f64 / (MARGINAL_POINTS - 1) as f64);
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs
}

struct InstanceWork {
    learn: InstanceLearn,
    posterior: PosteriorGmm,
    default_runs: MultistartResult,
    user_runs: Option<MultistartResult>,
    sweep: Option<Vec<TraceRow>>,
    marginals: Vec<(usize, f64, f64, f64)>,
}

fn learn_instance(
    ctx: &Context,
    spec: &ExperimentSpec,
    index: usize,
    set: &SampleSet,
    hp: &HyperPrior,
    user_starts: &[Vec<f64>],
    gamma_tol: f64,
) -> CliResult<InstanceWork> {
    let partition = spec.partition();
    let gmm = build_kde_gmm(&set.rows, &partition)?;
    let (default_runs, default_grid) = run_grid(ctx, &gmm, hp, &spec.starts, gamma_tol)?;
    let (user_runs, user_grid) = if user_starts.is_empty() {
        (None, None)
    } else {
        let (r, o) = run_grid(ctx, &gmm, hp, user_starts, gamma_tol)?;
        (Some(r), Some(o))
    };
    let optimum = default_runs.global_optimum().log_alpha.clone();
    let (_, terms) = nsbl::log_evidence(&gmm, &optimum)?;
    let relevance = nsbl::relevance(&terms, gamma_tol);
    let posterior = nsbl::posterior(&gmm, &optimum)?;
    let mut moments = Vec::with_capacity(spec.dim());
    let mut marginals = Vec::new();
    for (j, name) in spec.names().into_iter().enumerate() {
        let pre = gmm.marginal_moments(j);
        let post = posterior.marginal_moments(j);
        moments.push(ParamMoments {
            name,
            pre_mean: pre.0,
            pre_sd: pre.1.max(0.0).sqrt(),
            post_mean: post.0,
            post_sd: post.1.max(0.0).sqrt(),
        });
        for x in marginal_grid(pre, post) {
            marginals.push((j, x, gmm.marginal_pdf(j, x), posterior.marginal_pdf(j, x)));
        }
    }
    let sweep = if partition.n_alpha() == 1 {
        Some(optimizer::sweep_1d(&gmm, hp, SWEEP.0, SWEEP.1, SWEEP.2)?)
    } else {
        None
    };
    Ok(InstanceWork {
        learn: InstanceLearn {
            index,
            n_samples: set.len(),
            default_grid,
            user_grid,
            relevance,
            log_alpha: optimum.values().to_vec(),
            moments,
        },
        posterior,
        default_runs,
        user_runs,
        sweep,
        marginals,
    })
}

pub fn learn(ctx: &Context, id: &str) -> CliResult<LearnSummary> {
    let cfg = &ctx.config;
    let spec = spec_for(id)?;
    let up = Upstream::open(&ctx.layout, Stage::Sample, Some(id))?;
    let chain: SampleSummary = up.read_json("chain.json")?;
    let sets = chain
        .files
        .iter()
        .map(|f| Ok(SampleSet::read_csv(up.read(f)?.as_slice(), chain.meta.clone())?))
        .collect::<CliResult<Vec<_>>>()?;
    if chain.columns != spec.names() {
        return Err(CliError::artifact(up.dir.join("chain.json"), "sample columns do not match the experiment"));
    }
    let mut w = StageWriter::begin(&ctx.layout, Stage::Learn, Some(id), cfg)?;
    w.record_upstream(&up);

    let questionable = spec.questionable_names();
    let hp = cfg.hyperprior.prior(questionable.len())?;
    let gamma_tol = cfg.gamma_tol(id);
    let user_starts = cfg.experiment(id).starts;
    info!("{id}: learning relevance on {} instances", sets.len());
    let work = sets
        .par_iter()
        .enumerate()
        .map(|(i, s)| learn_instance(ctx, &spec, i, s, &hp, &user_starts, gamma_tol))
        .collect::<CliResult<Vec<_>>>()?;

    let names = spec.names();
    let mut marg = csv::Writer::from_writer(Vec::new());
    marg.write_record(["instance", "param", "x", "pre_pdf", "post_pdf"])?;
    for wk in &work {
        let dir = format!("instance_{:02}", wk.learn.index);
        w.write_json(&format!("{dir}/posterior.json"), &wk.posterior.to_document())?;
        let grids = [("default", Some(&wk.default_runs)), ("user", wk.user_runs.as_ref())];
        for (grid, runs) in grids {
            let Some(runs) = runs else { continue };
            for (k, run) in runs.runs.iter().enumerate() {
                let bytes = csv_bytes(|b| optimizer::write_run_trace(b, &questionable, run))?;
                w.write(&format!("{dir}/trace_{grid}_{k:02}.csv"), &bytes)?;
            }
        }
        if let Some(rows) = &wk.sweep {
            let bytes = csv_bytes(|b| write_evaluation_trace(b, &questionable, rows))?;
            w.write(&format!("{dir}/sweep.csv"), &bytes)?;
        }
        for &(j, x, pre, post) in &wk.marginals {
            marg.write_record([
                wk.learn.index.to_string(),
                names[j].clone(),
                x.to_string(),
                pre.to_string(),
                post.to_string(),
            ])?;
        }
        let r = &wk.learn;
        info!(
            "{id}: instance {} log alpha {:?} gamma_rms {:?}",
            r.index, r.log_alpha, r.relevance.gamma_rms
        );
    }
    let marg = marg.into_inner().map_err(|e| CliError::io("marginals.csv", e.into_error()))?;
    w.write("marginals.csv", &marg)?;
    let summary = LearnSummary {
        experiment: id.to_string(),
        config_hash: ctx.config_hash().to_string(),
        params: names,
        questionable,
        gamma_tol,
        instances: work.into_iter().map(|wk| wk.learn).collect(),
    };
    w.write_json("learn.json", &summary)?;
    w.finish()?;
    Ok(summary)
}

// ---------------------------------------------------------------- report

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            sd,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub relevant: usize,
    pub irrelevant: usize,
    pub borderline: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub name: String,
    pub log_alpha: Stats,
    pub gamma_rms: Stats,
    pub counts: VerdictCounts,
    /// Verdict held by a strict majority of instances, else borderline.
    pub consensus: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub name: String,
    pub pre_mean: Stats,
    pub pre_sd: Stats,
    pub post_mean: Stats,
    pub post_sd: Stats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub starts: Vec<Vec<f64>>,
    /// Per instance, the distinct optima in decreasing objective order.
    pub optima: Vec<Vec<ClusterSummary>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub config_hash: String,
    pub n_instances: usize,
    pub gamma_tol: f64,
    pub questionable: Vec<ParamReport>,
    pub moments: Vec<MomentReport>,
    pub default_grid: GridReport,
    pub user_grid: Option<GridReport>,
}

fn consensus(c: &VerdictCounts, n: usize) -> Verdict {
    if 2 * c.relevant > n {
        Verdict::Relevant
    } else if 2 * c.irrelevant > n {
        Verdict::Irrelevant
    } else {
        Verdict::Borderline
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Relevant => "relevant",
        Verdict::Irrelevant => "irrelevant",
        Verdict::Borderline => "borderline",
    }
}

pub fn build_report(learn: &LearnSummary) -> Report {
    let n = learn.instances.len();
    let questionable = learn
        .questionable
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut counts = VerdictCounts::default();
            for inst in &learn.instances {
                match inst.relevance.verdicts[i] {
                    Verdict::Relevant => counts.relevant += 1,
                    Verdict::Irrelevant => counts.irrelevant += 1,
                    Verdict::Borderline => counts.borderline += 1,
                }
            }
            let la: Vec<f64> = learn.instances.iter().map(|r| r.log_alpha[i]).collect();
            let g: Vec<f64> = learn.instances.iter().map(|r| r.relevance.gamma_rms[i]).collect();
            ParamReport {
                name: name.clone(),
                log_alpha: Stats::of(&la),
                gamma_rms: Stats::of(&g),
                consensus: consensus(&counts, n),
                counts,
            }
        })
        .collect();
    let moments = learn
        .params
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let pick = |f: fn(&ParamMoments) -> f64| -> Stats {
                Stats::of(&learn.instances.iter().map(|r| f(&r.moments[j])).collect::<Vec<_>>())
            };
            MomentReport {
                name: name.clone(),
                pre_mean: pick(|m| m.pre_mean),
                pre_sd: pick(|m| m.pre_sd),
                post_mean: pick(|m| m.post_mean),
                post_sd: pick(|m| m.post_sd),
            }
        })
        .collect();
    let grid = |f: fn(&InstanceLearn) -> Option<&GridOutcome>| -> Option<GridReport> {
        let first = f(learn.instances.first()?)?;
        Some(GridReport {
            starts: first.starts.clone(),
            optima: learn
                .instances
                .iter()
                .filter_map(|r| f(r).map(|g| g.clusters.clone()))
                .collect(),
        })
    };
    Report {
        experiment: learn.experiment.clone(),
        config_hash: learn.config_hash.clone(),
        n_instances: n,
        gamma_tol: learn.gamma_tol,
        questionable,
        moments,
        default_grid: grid(|r| Some(&r.default_grid)).unwrap_or(GridReport {
            starts: vec![],
            optima: vec![],
        }),
        user_grid: grid(|r| r.user_grid.as_ref()),
    }
}

fn optima_csv(learn: &LearnSummary) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["instance", "grid", "rank", "multiplicity", "objective"].map(String::from).to_vec();
    for prefix in ["log_alpha", "gamma_rms", "verdict"] {
        header.extend(learn.questionable.iter().map(|q| format!("{prefix}_{q}")));
    }
    w.write_record(&header)?;
    for inst in &learn.instances {
        let grids = [("default", Some(&inst.default_grid)), ("user", inst.user_grid.as_ref())];
        for (grid, outcome) in grids {
            let Some(outcome) = outcome else { continue };
            for (rank, c) in outcome.clusters.iter().enumerate() {
                let mut row = vec![
                    inst.index.to_string(),
                    grid.to_string(),
                    rank.to_string(),
                    c.members.len().to_string(),
                    c.objective.to_string(),
                ];
                row.extend(c.log_alpha.iter().map(f64::to_string));
                row.extend(c.gamma_rms.iter().map(f64::to_string));
                row.extend(c.verdicts.iter().map(|v| verdict_name(*v).to_string()));
                w.write_record(&row)?;
            }
        }
    }
    w.into_inner().map_err(|e| CliError::io("optima.csv", e.into_error()))
}

fn moments_csv(learn: &LearnSummary) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["instance", "param", "pre_mean", "pre_sd", "post_mean", "post_sd"])?;
    for inst in &learn.instances {
        for m in &inst.moments {
            w.write_record([
                inst.index.to_string(),
                m.name.clone(),
                m.pre_mean.to_string(),
                m.pre_sd.to_string(),
                m.post_mean.to_string(),
                m.post_sd.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| CliError::io("moments.csv", e.into_error()))
}

pub fn report(ctx: &Context, id: &str) -> CliResult<Report> {
    spec_for(id)?;
    let up = Upstream::open(&ctx.layout, Stage::Learn, Some(id))?;
    let learn: LearnSummary = up.read_json("learn.json")?;
    let mut w = StageWriter::begin(&ctx.layout, Stage::Report, Some(id), &ctx.config)?;
    w.record_upstream(&up);
    let report = build_report(&learn);
    w.write_json("report.json", &report)?;
    w.write("optima.csv", &optima_csv(&learn)?)?;
    w.write("moments.csv", &moments_csv(&learn)?)?;
    w.write("marginals.csv", &up.read("marginals.csv")?)?;
    w.finish()?;
    for p in &report.questionable {
        info!(
            "{id}: {} consensus {} (gamma_rms mean {:.3}, log alpha mean {:.2})",
            p.name,
            verdict_name(p.consensus),
            p.gamma_rms.mean,
            p.log_alpha.mean
        );
    }
    Ok(report)
}
