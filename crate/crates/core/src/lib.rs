//! Nonlinear sparse Bayesian learning: ARD-based relevance determination for
//! questionable parameters of nonlinear models, starting from MCMC samples of
//! the full parameter posterior.
//!
//! The pipeline is
//! 1. sample the parameter posterior with [`samplers::Dram`],
//! 2. build a kernel density mixture with [`gmm::build_kde_gmm`],
//! 3. maximize the hyperparameter objective with [`optimizer::multistart`],
//! 4. read off relevance with [`nsbl::relevance`].
//!
//! [`aero`] contains the aeroelastic limit-cycle case study.

pub mod aero;
pub mod error;
pub mod gmm;
pub mod linalg;
pub mod nsbl;
pub mod optimizer;
pub mod samplers;

pub use error::{Error, Result};
pub use gmm::{GaussianKernel, GmmApproximation, ParameterPartition};
pub use nsbl::{EvidenceTerms, HyperPrior, LogAlpha, ObjectiveEval, PosteriorGmm, RelevanceReport, Verdict};
pub use optimizer::{MultistartResult, NsblObjective, Objective, OptimizationResult, OptimizerConfig};
