//! Choosing the displacement for each adaptive step.

mod controller;
mod lut;
mod objective;
mod optimizer;

pub use controller::{
    adaptive_step, choose_displacement, skew_correction, AdaptiveState, StrategyConfig,
};
pub use lut::{
    advance, build_record_lut, build_record_lut_capped, build_variance_lut, default_sigma_grid,
    sigma_grid, RecordCache, RecordLut, RecordSource, VarianceEntry, VarianceLut,
    DEFAULT_K_SWITCH, DEFAULT_RECORD_CAP,
};
pub use objective::{evaluate, expected_sharpness, mutual_information, Objective};
pub use optimizer::{optimize_displacement, DisplacementOptimizer, OptimizationGrids};
