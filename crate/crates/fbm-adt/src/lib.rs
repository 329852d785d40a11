//! Accelerated degradation testing with fractional Brownian motion.
//!
//! This crate fits degradation measurements collected under elevated stress
//! with a model that combines a stress-accelerated power-law trend, random
//! unit-to-unit drift, and fractional-Brownian-motion noise with memory,
//! then extrapolates lifetime and reliability at the normal operating stress
//! by Monte Carlo simulation.
//!
//! The pieces, bottom up:
//!
//! * [`fbm`] — FBM covariance structure and exact fGn/FBM samplers.
//! * [`model`] — stress normalization, model parameters, and trends.
//! * [`dataset`] — grouped measurement data with CSV ingest/export.
//! * [`inference`] — EM estimation with closed-form conditional updates,
//!   plus the two-step and fixed-drift maximum-likelihood baselines.
//! * [`reliability`] — first-passage Monte Carlo at the normal stress.
//! * [`evaluation`] — relative error, AIC, extrapolation-residual indices,
//!   and hold-one-stress-out cross-validation.
//! * [`simulator`] — synthetic dataset generation and design sweeps.
//! * [`rng`] — deterministic splittable random streams used throughout.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod fbm;
pub mod inference;
pub mod model;
pub mod optim;
pub mod reliability;
pub mod rng;
pub mod simulator;

pub use dataset::{AdtDataset, StressLevel, UnitObservations};
pub use error::{AdtError, Result};
pub use evaluation::{
    aic, cross_validate, er_indices, relative_error, CrossValPlan, CrossValReport, ErReport,
};
pub use fbm::{
    fbm_covariance, simulate_fbm_path, simulate_fgn, FbmCovariance, FgnSampler, HurstExponent,
    TimeGrid,
};
pub use inference::{
    fit, observed_loglik, posterior_drift, DriftPosterior, FitMethod, FitOptions, FitResult,
    SearchBounds,
};
pub use model::{normalize_stress, AccelerationKind, ModelParams, ModelVariant, StressSpec};
pub use reliability::{
    reliability_curve, simulate_degradation_paths, simulate_first_passages,
    simulate_observation_ensemble, time_at_reliability, FirstPassage, FirstPassages, McConfig,
    PathEnsemble, ReliabilityCurve,
};
pub use simulator::{generate_dataset, run_design_sweep, SimDesign, SweepReport, SweepSettings};
