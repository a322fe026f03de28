//! Unnormalized posterior `p(D | phi) p(phi_-alpha)` of one experiment.

use super::ekf::{ekf_log_likelihood, EkfConfig};
use super::experiments::ExperimentSpec;
use super::system::AeroSystem;
use super::ObservationSeries;
use crate::samplers::{Support, TargetDensity};

/// EKF likelihood times the known prior. Questionable coordinates carry no
/// prior factor here; failed filter runs map to `-inf`.
pub struct LikelihoodTarget<'a> {
    spec: &'a ExperimentSpec,
    base: &'a AeroSystem,
    data: &'a ObservationSeries,
    ekf: EkfConfig,
    supports: Vec<Support>,
}

impl<'a> LikelihoodTarget<'a> {
    pub fn new(spec: &'a ExperimentSpec, base: &'a AeroSystem, data: &'a ObservationSeries, ekf: EkfConfig) -> Self {
        Self {
            supports: spec.supports(),
            spec,
            base,
            data,
            ekf,
        }
    }

    pub fn log_likelihood(&self, phi: &[f64]) -> f64 {
        match ekf_log_likelihood(&self.spec.system(self.base, phi), self.data, &self.ekf) {
            Ok(v) if v.is_finite() => v,
            _ => f64::NEG_INFINITY,
        }
    }
}

impl TargetDensity for LikelihoodTarget<'_> {
    fn supports(&self) -> &[Support] {
        &self.supports
    }

    fn log_density(&self, phi: &[f64]) -> f64 {
        let prior = self.spec.known_log_prior(phi);
        if !prior.is_finite() {
            return f64::NEG_INFINITY;
        }
        prior + self.log_likelihood(phi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aero::{experiment, synthesize_observations, SimulationConfig};

    #[test]
    fn prior_support_and_truth_preference() {
        let truth = AeroSystem::reference();
        let cfg = SimulationConfig {
            duration_s: 2.0,
            ..SimulationConfig::default()
        };
        let data = synthesize_observations(&truth, &cfg).unwrap();
        let spec = experiment("1d-e3").unwrap();
        let t = LikelihoodTarget::new(&spec, &truth, &data, EkfConfig::default());
        let phi = spec.phi_of(&truth);
        assert!(t.log_density(&phi).is_finite());
        let mut outside = phi.clone();
        outside[1] = 0.5;
        assert_eq!(t.log_density(&outside), f64::NEG_INFINITY);
        let mut far = phi.clone();
        far[3] = 400.0;
        assert!(t.log_density(&far) < t.log_density(&phi));
    }
}
