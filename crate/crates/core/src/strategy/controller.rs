use std::sync::Arc;

use crate::distribution::PhaseDistribution;
use crate::error::{invalid, Error, Result};
use crate::optics::{likelihood_row, DetectorModel, DisplacementSetting};

use super::lut::{RecordSource, VarianceLut};
use super::objective::Objective;

/// Everything the per-step controller needs. `alpha_amp` is the amplitude of
/// the signal portion measured in one step.
#[derive(Debug, Clone)]
pub struct StrategyConfig {
    pub objective: Objective,
    pub steps: usize,
    pub k_switch: usize,
    pub alpha_amp: f64,
    pub detector: DetectorModel,
    pub grid_size: usize,
    pub record: Option<RecordSource>,
    pub variance: Option<Arc<VarianceLut>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    /// 1-based index of the step about to be measured.
    pub step: usize,
    pub prior: PhaseDistribution,
    /// Argmax of `prior`.
    pub estimate: f64,
    pub record: Vec<u32>,
    pub lo_history: Vec<DisplacementSetting>,
}

impl AdaptiveState {
    pub fn initial(grid_size: usize) -> Result<Self> {
        Self::from_prior(PhaseDistribution::uniform(grid_size)?)
    }

    pub fn from_prior(prior: PhaseDistribution) -> Result<Self> {
        Ok(Self {
            step: 1,
            estimate: prior.argmax_phase(),
            prior,
            record: Vec::new(),
            lo_history: Vec::new(),
        })
    }

    /// Absolute LO phase for `setting` at the current estimate.
    pub fn lo_phase(&self, setting: &DisplacementSetting) -> f64 {
        setting.lo_phase(self.estimate)
    }
}

/// `f(μ₃) = −sign(μ₃)/(1 + |μ₃|)` with `sign(0) = 0`.
pub fn skew_correction(mu3: f64) -> f64 {
    if mu3 == 0.0 || mu3.is_nan() {
        0.0
    } else {
        -mu3.signum() / (1.0 + mu3.abs())
    }
}

pub fn choose_displacement(state: &AdaptiveState, config: &StrategyConfig) -> Result<DisplacementSetting> {
    if state.step == 0 || state.step > config.steps {
        return Err(invalid(format!(
            "step {} outside 1..={}",
            state.step, config.steps
        )));
    }
    if config.objective == Objective::NonOptimized {
        return Ok(DisplacementSetting::new(config.alpha_amp, 0.0));
    }
    if state.step < config.k_switch {
        let source = config.record.as_ref().ok_or_else(|| {
            Error::Configuration(format!("step {} needs a record LUT", state.step))
        })?;
        return source.lookup(&state.record);
    }
    let lut = config.variance.as_ref().ok_or_else(|| {
        Error::Configuration(format!("step {} needs a variance LUT", state.step))
    })?;
    let moments = state.prior.moments_about(state.estimate);
    let entry = lut.lookup(moments.variance);
    Ok(DisplacementSetting::new(
        entry.amplitude,
        skew_correction(moments.skewness) * entry.delta,
    ))
}

/// Applies outcome `outcome` measured with `setting` and advances the state.
pub fn adaptive_step(
    state: &AdaptiveState,
    outcome: u32,
    setting: &DisplacementSetting,
    det: &DetectorModel,
    alpha_amp: f64,
    grid_size: usize,
) -> Result<AdaptiveState> {
    if state.prior.grid_size() != grid_size {
        return Err(invalid(format!(
            "state grid has {} nodes, expected {grid_size}",
            state.prior.grid_size()
        )));
    }
    let row = likelihood_row(
        outcome,
        state.lo_phase(setting),
        alpha_amp,
        setting.amplitude,
        det,
        grid_size,
    )?;
    let posterior = state.prior.bayes_update(&row)?;
    Ok(state.advanced(posterior, outcome, setting))
}

impl AdaptiveState {
    pub(crate) fn advanced(&self, posterior: PhaseDistribution, outcome: u32, setting: &DisplacementSetting) -> Self {
        let mut record = self.record.clone();
        record.push(outcome);
        let mut lo_history = self.lo_history.clone();
        lo_history.push(*setting);
        Self {
            step: self.step + 1,
            estimate: posterior.argmax_phase(),
            prior: posterior,
            record,
            lo_history,
        }
    }
}
