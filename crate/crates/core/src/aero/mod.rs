//! Aeroelastic limit-cycle case study: model, synthetic data, EKF likelihood
//! and the sparse-learning experiment definitions.

pub mod ekf;
pub mod experiments;
pub mod filter;
pub mod psd;
pub mod simulate;
pub mod system;
pub mod target;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ekf::{ekf_log_likelihood, EkfConfig};
pub use experiments::{experiment, ExperimentSpec, Param, Prior, EXPERIMENT_IDS};
pub use simulate::{simulate, synthesize_observations, SimulationConfig, Trajectory};
pub use system::AeroSystem;
pub use target::LikelihoodTarget;

/// Uniformly sampled pitch measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub t_seconds: Vec<f64>,
    pub pitch_rad: Vec<f64>,
}

impl ObservationSeries {
    pub fn new(t_seconds: Vec<f64>, pitch_rad: Vec<f64>) -> Result<Self> {
        if t_seconds.len() != pitch_rad.len() {
            return Err(Error::invalid("time and pitch columns differ in length"));
        }
        if t_seconds.iter().chain(&pitch_rad).any(|v| !v.is_finite()) {
            return Err(Error::invalid("observation series contains non-finite values"));
        }
        if t_seconds.len() > 1 {
            let dt = t_seconds[1] - t_seconds[0];
            if !(dt > 0.0) {
                return Err(Error::invalid("timestamps must be strictly increasing"));
            }
            for (i, w) in t_seconds.windows(2).enumerate() {
                if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
                    return Err(Error::invalid(format!("non-uniform spacing at row {}", i + 1)));
                }
            }
        }
        Ok(Self { t_seconds, pitch_rad })
    }

    pub fn len(&self) -> usize {
        self.t_seconds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_seconds.is_empty()
    }

    /// Sample spacing in seconds.
    pub fn spacing(&self) -> Option<f64> {
        (self.len() > 1).then(|| (self.t_seconds[self.len() - 1] - self.t_seconds[0]) / (self.len() - 1) as f64)
    }

    pub fn sample_rate(&self) -> Option<f64> {
        self.spacing().map(|dt| 1.0 / dt)
    }

    /// CSV with header `t_seconds,pitch_rad`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_seconds", "pitch_rad"])?;
        for (t, y) in self.t_seconds.iter().zip(&self.pitch_rad) {
            w.write_record([t.to_string(), y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t_seconds", "pitch_rad"] {
            return Err(Error::invalid(format!("unexpected observation header {headers:?}")));
        }
        let mut t = Vec::new();
        let mut y = Vec::new();
        for rec in r.deserialize() {
            let (ti, yi): (f64, f64) = rec?;
            t.push(ti);
            y.push(yi);
        }
        Self::new(t, y)
    }
}
