//! Pipeline configuration: one JSON document, hashed for provenance.

use std::collections::BTreeMap;
use std::path::Path;

use nsbl_core::aero::{experiment, AeroSystem, EkfConfig, SimulationConfig};
use nsbl_core::optimizer::OptimizerConfig;
use nsbl_core::samplers::ChainConfig;
use nsbl_core::HyperPrior;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seed for data generation; chain seeds are derived from it.
    pub seed: u64,
    pub data: DataConfig,
    pub mcmc: McmcConfig,
    /// Per-experiment overrides keyed by experiment id.
    pub experiments: BTreeMap<String, ExperimentConfig>,
    pub optimizer: OptimizerConfig,
    pub hyperprior: HyperpriorConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 42,
            data: DataConfig::default(),
            mcmc: McmcConfig::default(),
            experiments: BTreeMap::new(),
            optimizer: OptimizerConfig::default(),
            hyperprior: HyperpriorConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Data-generating system.
    pub system: AeroSystem,
    pub dt_max: f64,
    pub duration_s: f64,
    pub settle_s: f64,
    pub initial_state: [f64; 3],
    pub tau_per_second: f64,
    pub observation_rate_hz: f64,
    pub noise_std_rad: f64,
    /// `null` disables the low-pass filter.
    pub cutoff_hz: Option<f64>,
    pub filter_order: usize,
    pub psd_segment: usize,
    /// Initial state standard deviations of the likelihood filter.
    pub filter_initial_std: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        let sim = SimulationConfig::default();
        Self {
            system: AeroSystem::reference(),
            dt_max: sim.dt_max,
            duration_s: sim.duration_s,
            settle_s: sim.settle_s,
            initial_state: sim.initial_state,
            tau_per_second: sim.tau_per_second,
            observation_rate_hz: sim.observation_rate_hz,
            noise_std_rad: sim.noise_std_rad,
            cutoff_hz: sim.cutoff_hz,
            filter_order: sim.filter_order,
            psd_segment: 4096,
            filter_initial_std: EkfConfig::default().x0_std,
        }
    }
}

impl DataConfig {
    pub fn simulation(&self, seed: u64) -> SimulationConfig {
        SimulationConfig {
            dt_max: self.dt_max,
            duration_s: self.duration_s,
            settle_s: self.settle_s,
            initial_state: self.initial_state,
            seed,
            tau_per_second: self.tau_per_second,
            observation_rate_hz: self.observation_rate_hz,
            noise_std_rad: self.noise_std_rad,
            cutoff_hz: self.cutoff_hz,
            filter_order: self.filter_order,
        }
    }

    pub fn ekf(&self) -> EkfConfig {
        EkfConfig {
            x0_mean: [0.0; 3],
            x0_std: self.filter_initial_std,
            noise_std_rad: self.noise_std_rad,
            tau_per_second: self.tau_per_second,
            dt_max: self.dt_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    /// Number of KDE instances the retained samples are split into.
    pub instances: usize,
    pub per_instance: usize,
    pub thin: usize,
    pub burn_in: usize,
    pub adapt_interval: usize,
    pub adapt_stationary: bool,
    pub dr_scale: f64,
    pub transform: bool,
    pub preoptimize: bool,
    /// Let the start refinement move the questionable coordinates; when
    /// unset they stay at zero until sampling begins.
    pub preoptimize_questionable: bool,
    pub nm_max_iters: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        let c = ChainConfig::default();
        Self {
            instances: 10,
            per_instance: 50,
            thin: c.thin,
            burn_in: c.burn_in,
            adapt_interval: c.adapt_interval,
            adapt_stationary: c.adapt_stationary,
            dr_scale: c.dr_scale,
            transform: c.transform,
            preoptimize: c.preoptimize,
            preoptimize_questionable: true,
            nm_max_iters: c.nm_max_iters,
        }
    }
}

impl McmcConfig {
    /// Chain settings producing `instances * per_instance` retained draws.
    /// `questionable` lists the coordinates held during start refinement
    /// unless `preoptimize_questionable` is set.
    pub fn chain(&self, seed: u64, instances: usize, per_instance: usize, questionable: &[usize]) -> ChainConfig {
        ChainConfig {
            n_stationary: instances * per_instance * self.thin,
            burn_in: self.burn_in,
            thin: self.thin,
            adapt_interval: self.adapt_interval,
            adapt_stationary: self.adapt_stationary,
            dr_scale: self.dr_scale,
            seed,
            transform: self.transform,
            preoptimize: self.preoptimize,
            preoptimize_hold: if self.preoptimize_questionable {
                Vec::new()
            } else {
                questionable.to_vec()
            },
            nm_max_iters: self.nm_max_iters,
            initial_cov: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Extra multistart grid, reported next to the default grid.
    pub starts: Vec<Vec<f64>>,
    /// Relevance tolerance; the default is used when absent.
    pub gamma_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperpriorConfig {
    pub log_shape: f64,
    pub log_rate: f64,
    pub gamma_tol: f64,
}

impl Default for HyperpriorConfig {
    fn default() -> Self {
        Self {
            log_shape: nsbl_core::nsbl::DEFAULT_LOG_HYPER,
            log_rate: nsbl_core::nsbl::DEFAULT_LOG_HYPER,
            gamma_tol: nsbl_core::nsbl::DEFAULT_GAMMA_TOL,
        }
    }
}

impl HyperpriorConfig {
    pub fn prior(&self, n_alpha: usize) -> CliResult<HyperPrior> {
        HyperPrior::from_logs(n_alpha, self.log_shape, self.log_rate).map_err(|e| CliError::config("hyperprior", e.to_string()))
    }
}

fn positive(field: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(field, format!("must be a positive finite number, got {v}")))
    }
}

fn at_least_one(field: &str, v: usize) -> CliResult<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(CliError::config(field, "must be at least 1"))
    }
}

impl Config {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(if path == "." { "(root)".to_string() } else { path }, e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let d = &self.data;
        positive("data.system.b", d.system.b)?;
        if !(d.system.sigma >= 0.0) {
            return Err(CliError::config("data.system.sigma", "must be non-negative"));
        }
        positive("data.dt_max", d.dt_max)?;
        positive("data.duration_s", d.duration_s)?;
        if !(d.settle_s >= 0.0) {
            return Err(CliError::config("data.settle_s", "must be non-negative"));
        }
        positive("data.tau_per_second", d.tau_per_second)?;
        positive("data.observation_rate_hz", d.observation_rate_hz)?;
        positive("data.noise_std_rad", d.noise_std_rad)?;
        if let Some(fc) = d.cutoff_hz {
            positive("data.cutoff_hz", fc)?;
            if !(d.observation_rate_hz > 2.0 * fc) {
                return Err(CliError::config("data.cutoff_hz", "observation rate must exceed twice the cutoff"));
            }
            if d.filter_order == 0 || d.filter_order % 2 == 1 {
                return Err(CliError::config("data.filter_order", "must be a positive even number"));
            }
        }
        if d.psd_segment < 8 {
            return Err(CliError::config("data.psd_segment", "must be at least 8"));
        }
        for (i, s) in d.filter_initial_std.iter().enumerate() {
            positive(&format!("data.filter_initial_std[{i}]"), *s)?;
        }
        let m = &self.mcmc;
        at_least_one("mcmc.instances", m.instances)?;
        at_least_one("mcmc.per_instance", m.per_instance)?;
        at_least_one("mcmc.thin", m.thin)?;
        at_least_one("mcmc.adapt_interval", m.adapt_interval)?;
        if !(m.dr_scale > 0.0 && m.dr_scale < 1.0) {
            return Err(CliError::config("mcmc.dr_scale", "must lie in (0, 1)"));
        }
        self.optimizer
            .validate()
            .map_err(|e| CliError::config("optimizer", e.to_string()))?;
        for (field, v) in [("hyperprior.log_shape", self.hyperprior.log_shape), ("hyperprior.log_rate", self.hyperprior.log_rate)] {
            if !v.is_finite() {
                return Err(CliError::config(field, "must be finite"));
            }
        }
        if !(self.hyperprior.gamma_tol > 0.0 && self.hyperprior.gamma_tol < 0.5) {
            return Err(CliError::config("hyperprior.gamma_tol", "must lie in (0, 0.5)"));
        }
        for (id, e) in &self.experiments {
            let field = format!("experiments.{id}");
            let spec = experiment(id).map_err(|_| CliError::config(&field, "unknown experiment id"))?;
            let n = spec.questionable().len();
            for (k, s) in e.starts.iter().enumerate() {
                if s.len() != n {
                    return Err(CliError::config(format!("{field}.starts[{k}]"), format!("expected {n} entries")));
                }
                if s.iter().any(|v| !v.is_finite() || v.abs() > nsbl_core::nsbl::LOG_ALPHA_BOX) {
                    return Err(CliError::config(format!("{field}.starts[{k}]"), "entries must lie in [-50, 50]"));
                }
            }
            if let Some(t) = e.gamma_tol {
                if !(t > 0.0 && t < 0.5) {
                    return Err(CliError::config(format!("{field}.gamma_tol"), "must lie in (0, 0.5)"));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn experiment(&self, id: &str) -> ExperimentConfig {
        self.experiments.get(id).cloned().unwrap_or_default()
    }

    pub fn gamma_tol(&self, id: &str) -> f64 {
        self.experiment(id).gamma_tol.unwrap_or(self.hyperprior.gamma_tol)
    }
}
