//! Sparse-learning setups: parameter vector, known priors, ARD assignment and
//! default multistart grids for each experiment.

use serde::{Deserialize, Serialize};

use super::system::AeroSystem;
use crate::error::{Error, Result};
use crate::gmm::ParameterPartition;
use crate::samplers::Support;

pub const EXPERIMENT_IDS: [&str; 6] = ["1d-e3", "1d-e5", "2d-e3e4", "2d-e3e5", "2d-e5e6", "4d"];

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    B,
    E1,
    E2,
    E3,
    E4,
    E5,
    E6,
    Sigma,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::B => "B",
            Param::E1 => "e1",
            Param::E2 => "e2",
            Param::E3 => "e3",
            Param::E4 => "e4",
            Param::E5 => "e5",
            Param::E6 => "e6",
            Param::Sigma => "sigma",
        }
    }

    pub fn get(self, sys: &AeroSystem) -> f64 {
        match self {
            Param::B => sys.b,
            Param::Sigma => sys.sigma,
            p => sys.e[p.e_index()],
        }
    }

    pub fn set(self, sys: &mut AeroSystem, v: f64) {
        match self {
            Param::B => sys.b = v,
            Param::Sigma => sys.sigma = v,
            p => sys.e[p.e_index()] = v,
        }
    }

    fn e_index(self) -> usize {
        match self {
            Param::E1 => 0,
            Param::E2 => 1,
            Param::E3 => 2,
            Param::E4 => 3,
            Param::E5 => 4,
            Param::E6 => 5,
            _ => unreachable!("not an aerodynamic coefficient"),
        }
    }
}

/// Prior factor of one coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    /// Lognormal with the given median and coefficient of variation.
    LogNormal { median: f64, cov: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Zero-mean Gaussian ARD prior; not part of the known prior.
    Ard,
}

impl Prior {
    /// Log density; `-inf` outside the support. ARD factors contribute zero.
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            Prior::LogNormal { median, cov } => {
                if !(x > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let s = (1.0 + cov * cov).ln().sqrt();
                let z = (x.ln() - median.ln()) / s;
                -x.ln() - s.ln() - 0.5 * LN_2PI - 0.5 * z * z
            }
            Prior::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    -(hi - lo).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Ard => 0.0,
        }
    }

    pub fn median(&self) -> f64 {
        match *self {
            Prior::LogNormal { median, .. } => median,
            Prior::Uniform { lo, hi } => 0.5 * (lo + hi),
            Prior::Ard => 0.0,
        }
    }

    pub fn support(&self) -> Support {
        match *self {
            Prior::LogNormal { .. } => Support::Positive,
            Prior::Uniform { lo, hi } => Support::Bounded { lo, hi },
            Prior::Ard => Support::Unbounded,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: String,
    pub params: Vec<Param>,
    pub priors: Vec<Prior>,
    /// Default multistart grid in `log alpha`.
    pub starts: Vec<Vec<f64>>,
}

impl ExperimentSpec {
    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name().to_string()).collect()
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn questionable(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.priors[i] == Prior::Ard).collect()
    }

    pub fn questionable_names(&self) -> Vec<String> {
        self.questionable().iter().map(|&i| self.params[i].name().to_string()).collect()
    }

    pub fn partition(&self) -> ParameterPartition {
        ParameterPartition::new(self.dim(), self.questionable()).expect("experiment tables are consistent")
    }

    pub fn supports(&self) -> Vec<Support> {
        self.priors.iter().map(Prior::support).collect()
    }

    /// Log density of the known prior over `phi_-alpha`.
    pub fn known_log_prior(&self, phi: &[f64]) -> f64 {
        self.priors.iter().zip(phi).map(|(p, &x)| p.log_density(x)).sum()
    }

    /// Chain start: prior medians for known parameters, zero for questionable ones.
    pub fn initial_point(&self) -> Vec<f64> {
        self.priors.iter().map(Prior::median).collect()
    }

    /// `base` with the coordinates of `phi` substituted; model terms absent
    /// from the experiment are zero.
    pub fn system(&self, base: &AeroSystem, phi: &[f64]) -> AeroSystem {
        let mut sys = base.clone();
        for p in [Param::E5, Param::E6] {
            if !self.params.contains(&p) {
                p.set(&mut sys, 0.0);
            }
        }
        for (p, &v) in self.params.iter().zip(phi) {
            p.set(&mut sys, v);
        }
        sys
    }

    /// Coordinates of `sys` in this experiment's ordering.
    pub fn phi_of(&self, sys: &AeroSystem) -> Vec<f64> {
        self.params.iter().map(|p| p.get(sys)).collect()
    }
}

fn b_prior(cov: f64) -> Prior {
    Prior::LogNormal { median: 0.2, cov }
}

const E12: Prior = Prior::Uniform { lo: -2.0, hi: 0.0 };
const E3_KNOWN: Prior = Prior::Uniform { lo: -250.0, hi: 250.0 };
const E4_KNOWN: Prior = Prior::Uniform { lo: -600.0, hi: 0.0 };
const SIGMA: Prior = Prior::LogNormal { median: 0.002, cov: 0.5 };

fn corners_2d() -> Vec<Vec<f64>> {
    vec![vec![-20.0, -20.0], vec![-5.0, -20.0], vec![-20.0, -5.0], vec![-5.0, -5.0]]
}

/// Setup for one of [`EXPERIMENT_IDS`].
pub fn experiment(id: &str) -> Result<ExperimentSpec> {
    use Param::*;
    let (params, priors, starts): (Vec<Param>, Vec<Prior>, Vec<Vec<f64>>) = match id {
        "1d-e3" => (
            vec![B, E1, E2, E3, E4, Sigma],
            vec![b_prior(0.5), E12, E12, Prior::Ard, E4_KNOWN, SIGMA],
            vec![vec![-20.0], vec![-10.0], vec![0.0]],
        ),
        "1d-e5" => (
            vec![B, E1, E2, E3, E4, E5, Sigma],
            vec![b_prior(0.5), E12, E12, E3_KNOWN, E4_KNOWN, Prior::Ard, SIGMA],
            vec![vec![-15.0], vec![-5.0], vec![5.0]],
        ),
        "2d-e3e4" => (
            vec![B, E1, E2, E3, E4, Sigma],
            vec![b_prior(0.5), E12, E12, Prior::Ard, Prior::Ard, SIGMA],
            corners_2d(),
        ),
        "2d-e3e5" => (
            vec![B, E1, E2, E3, E4, E5, Sigma],
            vec![b_prior(0.5), E12, E12, Prior::Ard, E4_KNOWN, Prior::Ard, SIGMA],
            corners_2d(),
        ),
        "2d-e5e6" => (
            vec![B, E1, E2, E3, E4, E5, E6, Sigma],
            vec![
                b_prior(50.0),
                E12,
                E12,
                E3_KNOWN,
                Prior::Uniform { lo: -1e4, hi: 0.0 },
                Prior::Ard,
                Prior::Ard,
                SIGMA,
            ],
            corners_2d(),
        ),
        "4d" => (
            vec![B, E1, E2, E3, E4, E5, E6, Sigma],
            vec![b_prior(0.5), E12, E12, Prior::Ard, Prior::Ard, Prior::Ard, Prior::Ard, SIGMA],
            vec![
                vec![-20.0, -20.0, -20.0, -20.0],
                vec![-20.0, -20.0, -5.0, -5.0],
                vec![-5.0, -5.0, -20.0, -20.0],
                vec![-5.0, -5.0, -5.0, -5.0],
            ],
        ),
        other => return Err(Error::UnknownSetup(other.to_string())),
    };
    Ok(ExperimentSpec {
        id: id.to_string(),
        params,
        priors,
        starts,
    })
}
