use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::filter;
use super::system::AeroSystem;
use super::ObservationSeries;
use crate::error::{Error, Result};

/// Nondimensional time units per second, calibrated so the reference limit
/// cycle has a dominant frequency of 3.25 Hz (see [`calibrate_time_scale`]).
pub const DEFAULT_TAU_PER_SECOND: f64 = 105.81;

/// Dominant pitch frequency of the reference limit cycle.
pub const TARGET_FREQUENCY_HZ: f64 = 3.25;

/// Divergence threshold on `max |state|`.
pub const DIVERGENCE_LIMIT: f64 = 1e3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    /// Upper bound on the Euler-Maruyama step.
    pub dt_max: f64,
    pub duration_s: f64,
    /// Simulated time discarded before the first observation.
    pub settle_s: f64,
    pub initial_state: [f64; 3],
    pub seed: u64,
    pub tau_per_second: f64,
    pub observation_rate_hz: f64,
    pub noise_std_rad: f64,
    /// Low-pass cutoff; `None` disables filtering.
    pub cutoff_hz: Option<f64>,
    pub filter_order: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt_max: 0.01,
            duration_s: 20.0,
            settle_s: 10.0,
            initial_state: [0.01, 0.0, 0.0],
            seed: 42,
            tau_per_second: DEFAULT_TAU_PER_SECOND,
            observation_rate_hz: 1000.0,
            noise_std_rad: 0.2f64.to_radians(),
            cutoff_hz: Some(25.0),
            filter_order: 4,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.dt_max, self.duration_s, self.tau_per_second, self.observation_rate_hz];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(
                "dt_max, duration_s, tau_per_second and observation_rate_hz must be positive",
            ));
        }
        if !(self.settle_s >= 0.0) || !(self.noise_std_rad >= 0.0) {
            return Err(Error::invalid("settle_s and noise_std_rad must be non-negative"));
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial state must be finite"));
        }
        if let Some(fc) = self.cutoff_hz {
            if !(fc > 0.0) || self.observation_rate_hz <= 2.0 * fc {
                return Err(Error::invalid(format!(
                    "observation rate {} Hz must exceed twice the cutoff {fc} Hz",
                    self.observation_rate_hz
                )));
            }
            if self.filter_order == 0 {
                return Err(Error::invalid("filter order must be at least 1"));
            }
        }
        Ok(())
    }

    /// Nondimensional time between observations.
    pub fn observation_interval_tau(&self) -> f64 {
        self.tau_per_second / self.observation_rate_hz
    }

    pub fn n_observations(&self) -> usize {
        (self.duration_s * self.observation_rate_hz).round() as usize
    }

    fn n_settle(&self) -> usize {
        (self.settle_s * self.observation_rate_hz).round() as usize
    }
}

/// Split an observation interval into the fewest equal steps no longer than
/// `dt_max`, so observation times land exactly on integration nodes.
pub fn substeps(interval: f64, dt_max: f64) -> (usize, f64) {
    let n = ((interval / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (n, interval / n as f64)
}

/// States on a uniform nondimensional time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<[f64; 3]>,
}

impl Trajectory {
    pub fn pitch(&self) -> Vec<f64> {
        self.states.iter().map(|s| s[0]).collect()
    }
}

/// One Euler-Maruyama step. The increment `B sigma sqrt(dt) z` enters `C_M` only.
#[inline]
pub(crate) fn em_step(sys: &AeroSystem, x: &Vector3<f64>, dt: f64, z: f64) -> Vector3<f64> {
    let mut next = x + sys.drift(x) * dt;
    next[2] += sys.diffusion() * dt.sqrt() * z;
    next
}

/// Integrate `n_steps` Euler-Maruyama steps from `x0`. Without an RNG the
/// noise is dropped.
pub fn integrate<R: Rng>(
    sys: &AeroSystem,
    x0: [f64; 3],
    dt: f64,
    n_steps: usize,
    mut rng: Option<&mut R>,
) -> Result<Trajectory> {
    sys.validate()?;
    if !(dt > 0.0) {
        return Err(Error::invalid("step size must be positive"));
    }
    let mut x = Vector3::from(x0);
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(x0);
    for step in 1..=n_steps {
        let z = match rng.as_deref_mut() {
            Some(r) => r.sample(StandardNormal),
            None => 0.0,
        };
        x = em_step(sys, &x, dt, z);
        let magnitude = x.amax();
        if !magnitude.is_finite() || magnitude > DIVERGENCE_LIMIT {
            return Err(Error::Divergence { step, magnitude });
        }
        states.push([x[0], x[1], x[2]]);
    }
    Ok(Trajectory { dt, states })
}

/// Process-noise and measurement-noise generators for one seed.
fn rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut process = ChaCha8Rng::seed_from_u64(seed);
    process.set_stream(0);
    let mut measurement = ChaCha8Rng::seed_from_u64(seed);
    measurement.set_stream(1);
    (process, measurement)
}

/// Simulate settle period plus observation window on the substep grid.
pub fn simulate(sys: &AeroSystem, cfg: &SimulationConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let (n_sub, dt) = substeps(cfg.observation_interval_tau(), cfg.dt_max);
    let n_intervals = cfg.n_settle() + cfg.n_observations().saturating_sub(1);
    let (mut process, _) = rngs(cfg.seed);
    integrate(sys, cfg.initial_state, dt, n_intervals * n_sub, Some(&mut process))
}

/// Noisy, low-passed pitch measurements sampled at the observation rate.
pub fn synthesize_observations(sys: &AeroSystem, cfg: &SimulationConfig) -> Result<ObservationSeries> {
    let traj = simulate(sys, cfg)?;
    let (n_sub, _) = substeps(cfg.observation_interval_tau(), cfg.dt_max);
    let first = cfg.n_settle() * n_sub;
    let (_, mut measurement) = rngs(cfg.seed);
    let mut pitch: Vec<f64> = (0..cfg.n_observations())
        .map(|i| {
            let z: f64 = measurement.sample(StandardNormal);
            traj.states[first + i * n_sub][0] + cfg.noise_std_rad * z
        })
        .collect();
    if let Some(fc) = cfg.cutoff_hz {
        let sos = filter::butterworth_lowpass(cfg.filter_order, fc, cfg.observation_rate_hz)?;
        pitch = filter::filtfilt(&sos, &pitch);
    }
    let t_seconds = (0..pitch.len()).map(|i| i as f64 / cfg.observation_rate_hz).collect();
    ObservationSeries::new(t_seconds, pitch)
}

/// Period and peak-to-peak half amplitude of the pitch signal over its
/// last `fraction` (noise-free runs).
pub fn limit_cycle_stats(traj: &Trajectory, fraction: f64) -> Option<(f64, f64)> {
    let pitch = traj.pitch();
    let start = ((1.0 - fraction.clamp(0.0, 1.0)) * pitch.len() as f64) as usize;
    let tail = &pitch[start..];
    let mut crossings = Vec::new();
    for i in 1..tail.len() {
        if tail[i - 1] < 0.0 && tail[i] >= 0.0 {
            let frac = tail[i - 1] / (tail[i - 1] - tail[i]);
            crossings.push((i - 1) as f64 + frac);
        }
    }
    if crossings.len() < 3 {
        return None;
    }
    let period = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64 * traj.dt;
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Some((period, 0.5 * (hi - lo)))
}

/// Nondimensional time units per second that place the noise-free limit
/// cycle of `sys` at `target_hz`.
pub fn calibrate_time_scale(sys: &AeroSystem, target_hz: f64, dt: f64) -> Result<f64> {
    let mut quiet = sys.clone();
    quiet.sigma = 0.0;
    let n = (3000.0 / dt).round() as usize;
    let traj = integrate::<ChaCha8Rng>(&quiet, [0.01, 0.0, 0.0], dt, n, None)?;
    let (period, amplitude) = limit_cycle_stats(&traj, 0.25)
        .ok_or_else(|| Error::Evaluation("no limit cycle found during calibration".into()))?;
    if amplitude < 1e-6 {
        return Err(Error::Evaluation("limit cycle amplitude vanishes".into()));
    }
    Ok(target_hz * period)
}
