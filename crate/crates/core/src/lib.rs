//! Exact and particle filters for finite-state hidden Markov models whose
//! transition kernel depends on an unknown parameter, and numerical checks of
//! the stability and consistency properties of the parameter-augmented
//! filter.
//!
//! Module map:
//!
//! - [`measure`], [`kernel`], [`metrics`]: finite measures, stochastic
//!   matrices, total variation, Hilbert projective metric, Birkhoff
//!   contraction, mixing constants and the Lévy–Prokhorov distance.
//! - [`model`]: kernel families on a parameter grid, the observation model,
//!   the augmented model, stationary laws, identifiability and simulation.
//! - [`filter`]: exact per-parameter and augmented filters.
//! - [`particle`]: bootstrap particle filter on the augmented state.
//! - [`diagnostics`]: step errors and bounds, derivative bounds, posterior
//!   concentration and stability gaps.
//! - [`harness`], [`model_file`]: experiment configuration, model files and
//!   result persistence behind the `adafilter` CLI.

pub mod diagnostics;
pub mod error;
pub mod filter;
pub mod harness;
pub mod kernel;
pub mod logspace;
pub mod measure;
pub mod metrics;
pub mod model;
pub mod particle;
pub mod rng;
pub mod model_file;

pub use error::{Error, Result};
pub use filter::{
    filter_step, log_likelihood_ratio, param_posterior, run_augmented_filter, run_filter,
    state_marginal, AugmentedFilterState, FilterState,
};
pub use kernel::{FiniteKernel, Matrix};
pub use measure::{empirical_measure, DiscreteMeasure};
pub use metrics::{
    birkhoff_tau, hilbert_metric, mixing_constant, prokhorov_distance, tv_norm, MixingCertificate,
};
pub use model::{
    identifiability_scan, nu_theta, simulate, stationary_dist, AugmentedModel, GaussianMixture,
    KernelFamily, KernelTemplate, ObservationModel, Trajectory,
};
pub use particle::{pf_estimates, pf_init, pf_step, ParticleEnsemble};
