//! Adaptive phase estimation of optical coherent states with displaced
//! photon-number-resolving detection and Bayesian feedback.

pub mod distribution;
pub mod error;
pub mod fixed_point;
pub mod harness;
pub mod optics;
pub mod strategy;

pub use distribution::{wrap_pi, wrap_tau, CircularMoments, PhaseDistribution};
pub use error::{Error, Result};
pub use harness::{
    bias_analysis, run_ensemble, run_trial, sweep_alpha, Ensemble, EnsembleStats,
    SimulationConfig, Strategy, SweepRow, TrialResult,
};
pub use optics::{DetectorModel, DisplacementSetting};
pub use strategy::Objective;
