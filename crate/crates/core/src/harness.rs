//! Single-shot trials, ensembles, sweeps over the signal strength and the
//! estimator-bias diagnostic.
//!
//! Per-trial seeds are `trial_seed(master, i) = mix(master ^ mix(i))` where
//! `mix` is the SplitMix64 step (add `0x9E3779B97F4A7C15`, then the
//! `0xBF58476D1CE4E5B9` / `0x94D049BB133111EB` finalizer with shifts 30, 27,
//! 31). Each trial seeds a ChaCha8 stream with its seed, draws the random
//! phase `2π·u` first, then draws one `u64` that seeds the outcome stream.
//! Every outcome consumes exactly one uniform from that stream.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::distribution::{wrap_pi, wrap_tau, PhaseDistribution, DEFAULT_GRID_SIZE, MIN_GRID_SIZE};
use crate::error::{invalid, Error, Result};
use crate::fixed_point::{self, FixedPointDist, FP_GRID};
use crate::optics::{bounds, likelihood_row, sample_outcome, DetectorModel, DisplacementSetting};
use crate::strategy::{
    adaptive_step, build_variance_lut, choose_displacement, sigma_grid, AdaptiveState, Objective,
    OptimizationGrids, RecordCache, RecordSource, StrategyConfig, VarianceLut, DEFAULT_K_SWITCH,
};

/// Sharpness below which the Holevo variance is reported as infinite.
pub const MIN_SHARPNESS: f64 = 1e-9;
/// Two-sided 5σ tail probability of a standard normal.
pub const FIVE_SIGMA_P: f64 = 5.733e-7;
pub const DEFAULT_BIAS_BINS: usize = 32;
pub const MIN_BIAS_TRIALS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    /// Total mean photon number over all steps.
    pub alpha_sq: f64,
    pub objective: Objective,
    pub steps: usize,
    pub detector: DetectorModel,
    pub grid_size: usize,
    pub k_switch: usize,
    pub beta_points: usize,
    pub beta_max_ratio: f64,
    pub delta_points: usize,
    pub sigma_points: usize,
    pub log10_sigma_min: f64,
    pub log10_sigma_max: f64,
    pub fixed_point: bool,
    /// Threads for the ensemble; 0 uses every core.
    pub workers: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            alpha_sq: 10.0,
            objective: Objective::Sharpness,
            steps: 30,
            detector: DetectorModel::ideal(3),
            grid_size: DEFAULT_GRID_SIZE,
            k_switch: DEFAULT_K_SWITCH,
            beta_points: OptimizationGrids::DEFAULT_POINTS,
            beta_max_ratio: OptimizationGrids::DEFAULT_BETA_MAX_RATIO,
            delta_points: OptimizationGrids::DEFAULT_POINTS,
            sigma_points: 64,
            log10_sigma_min: -4.0,
            log10_sigma_max: 0.5,
            fixed_point: false,
            workers: 0,
        }
    }
}

impl SimulationConfig {
    /// Amplitude of the signal portion measured in one step.
    pub fn alpha_amp(&self) -> f64 {
        (self.alpha_sq / self.steps as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_sq >= 0.0) || !self.alpha_sq.is_finite() {
            return Err(invalid(format!("alpha_sq must be >= 0, got {}", self.alpha_sq)));
        }
        if self.steps < 1 {
            return Err(invalid("steps must be at least 1"));
        }
        self.detector.validate()?;
        if self.grid_size < MIN_GRID_SIZE {
            return Err(invalid(format!("grid_size must be at least {MIN_GRID_SIZE}")));
        }
        if self.k_switch < 1 {
            return Err(invalid("k_switch must be at least 1"));
        }
        if self.fixed_point && self.grid_size != FP_GRID {
            return Err(invalid(format!("fixed-point mode needs grid_size {FP_GRID}")));
        }
        if self.sigma_points == 0 || !(self.log10_sigma_min < self.log10_sigma_max) {
            return Err(invalid("sigma grid needs points > 0 and log10_sigma_min < log10_sigma_max"));
        }
        self.grids().map(|_| ())
    }

    pub fn grids(&self) -> Result<OptimizationGrids> {
        OptimizationGrids::linear(
            self.alpha_amp(),
            self.beta_points,
            self.beta_max_ratio,
            self.delta_points,
        )
    }

    pub fn sigma_grid(&self) -> Result<Vec<f64>> {
        sigma_grid(self.sigma_points, self.log10_sigma_min, self.log10_sigma_max)
    }

    /// Whether the run reaches the variance-LUT regime.
    pub fn needs_variance_lut(&self) -> bool {
        self.objective.is_optimized() && self.steps >= self.k_switch
    }

    pub fn needs_record_lut(&self) -> bool {
        self.objective.is_optimized() && self.k_switch > 1
    }
}

/// A validated configuration together with its controller tables.
#[derive(Debug, Clone)]
pub struct Strategy {
    sim: SimulationConfig,
    controller: StrategyConfig,
}

impl Strategy {
    /// Builds the variance LUT up front and fills the record LUT on demand.
    pub fn prepare(sim: &SimulationConfig) -> Result<Self> {
        sim.validate()?;
        let grids = sim.grids()?;
        let record = if sim.needs_record_lut() {
            Some(RecordSource::Lazy(Arc::new(RecordCache::new(
                sim.alpha_amp(),
                &sim.detector,
                sim.objective,
                &grids,
                sim.k_switch,
                sim.grid_size,
            )?)))
        } else {
            None
        };
        let variance = if sim.needs_variance_lut() {
            Some(Arc::new(build_variance_lut(
                sim.alpha_amp(),
                &sim.detector,
                sim.objective,
                &grids,
                &sim.sigma_grid()?,
                sim.grid_size,
            )?))
        } else {
            None
        };
        Self::with_luts(sim, record, variance)
    }

    pub fn with_luts(
        sim: &SimulationConfig,
        record: Option<RecordSource>,
        variance: Option<Arc<VarianceLut>>,
    ) -> Result<Self> {
        sim.validate()?;
        if sim.needs_record_lut() {
            match &record {
                None => return Err(Error::Configuration("missing record LUT".into())),
                Some(r) if r.k_switch() != sim.k_switch => {
                    return Err(Error::Configuration(format!(
                        "record LUT has k_switch {}, config has {}",
                        r.k_switch(),
                        sim.k_switch
                    )))
                }
                _ => {}
            }
        }
        if sim.needs_variance_lut() && variance.is_none() {
            return Err(Error::Configuration("missing variance LUT".into()));
        }
        let controller = StrategyConfig {
            objective: sim.objective,
            steps: sim.steps,
            k_switch: sim.k_switch,
            alpha_amp: sim.alpha_amp(),
            detector: sim.detector,
            grid_size: sim.grid_size,
            record,
            variance,
        };
        Ok(Self {
            sim: sim.clone(),
            controller,
        })
    }

    pub fn simulation(&self) -> &SimulationConfig {
        &self.sim
    }

    pub fn controller(&self) -> &StrategyConfig {
        &self.controller
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    pub phi0: f64,
    /// Circular mean of the final posterior, in `[0, 2π)`.
    pub final_estimate: f64,
    pub argmax_estimate: f64,
    /// `final_estimate − φ₀` wrapped to `(−π, π]`.
    pub error: f64,
    pub initial_lo_phase: f64,
    pub record: Vec<u32>,
    pub lo_history: Vec<DisplacementSetting>,
    /// Absolute LO phase used at each step, in `[0, 2π)`.
    pub lo_phases: Vec<f64>,
}

/// Runs one full adaptive measurement of a signal with phase `phi0`, the
/// first LO phase being `theta0`.
///
/// The posterior is tracked in a frame rotated so the chain starts from the
/// uniform prior with its estimate on node 0; physical phases differ from
/// chain phases by a constant offset, which keeps record-LUT lookups exact
/// for any `theta0`.
pub fn run_trial(strategy: &Strategy, phi0: f64, theta0: f64, seed: u64) -> Result<TrialResult> {
    let sim = &strategy.sim;
    let cfg = &strategy.controller;
    let det = &cfg.detector;
    let a = cfg.alpha_amp;
    let k = cfg.grid_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let theta0 = if sim.fixed_point {
        fixed_point::dac_quantize_phase(theta0)
    } else {
        theta0
    };
    let mut state = AdaptiveState::initial(k)?;
    let mut fp = sim.fixed_point.then(FixedPointDist::uniform);
    let first = choose_displacement(&state, cfg)?;
    let frame = theta0 - state.lo_phase(&first);

    let mut lo_phases = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let setting = choose_displacement(&state, cfg)?;
        let theta_chain = state.lo_phase(&setting);
        let theta = theta_chain + frame;
        let outcome = sample_outcome(&mut rng, phi0 - theta, a, setting.amplitude, det);
        lo_phases.push(wrap_tau(theta));
        state = match fp.as_mut() {
            Some(dist) => {
                let row = likelihood_row(outcome, theta_chain, a, setting.amplitude, det, k)?;
                *dist = fixed_point::fp_bayes_update(dist, &fixed_point::quantize_row(&row)?)?;
                state.advanced(fixed_point::to_distribution(dist)?, outcome, &setting)
            }
            None => adaptive_step(&state, outcome, &setting, det, a, k)?,
        };
    }

    let (mean, _) = state.prior.circular_mean_sharpness()?;
    let final_estimate = wrap_tau(mean + frame);
    Ok(TrialResult {
        seed,
        phi0,
        final_estimate,
        argmax_estimate: wrap_tau(state.estimate + frame),
        error: wrap_pi(final_estimate - phi0),
        initial_lo_phase: wrap_tau(theta0),
        record: state.record,
        lo_history: state.lo_history,
        lo_phases,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(index))
}

/// Which of the two phases is fixed across an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseConvention {
    /// Fixed signal phase, uniformly random first LO phase.
    RandomLo { phi0: f64 },
    /// Fixed first LO phase, uniformly random signal phase.
    RandomSignal { theta0: f64 },
}

impl Default for PhaseConvention {
    fn default() -> Self {
        PhaseConvention::RandomLo { phi0: PI }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub n_trials: usize,
    /// `|⟨e^{i·error}⟩|`
    pub sharpness: f64,
    /// `1/S² − 1`, infinite when the sharpness vanishes.
    pub holevo_variance: f64,
    /// Leave-one-out jackknife standard error of the variance.
    pub stderr_variance: f64,
    pub errors: Vec<f64>,
}

impl EnsembleStats {
    pub fn from_errors(errors: &[f64]) -> Self {
        let n = errors.len();
        let phasors: Vec<Complex64> = errors.iter().map(|e| Complex64::from_polar(1.0, *e)).collect();
        let total: Complex64 = phasors.iter().sum();
        let (sharpness, holevo_variance) = if n == 0 {
            (0.0, f64::INFINITY)
        } else {
            let s = (total.norm() / n as f64).min(1.0);
            (s, holevo(s))
        };
        let stderr_variance = if n < 2 || holevo_variance.is_infinite() {
            f64::INFINITY
        } else {
            let loo: Vec<f64> = phasors
                .iter()
                .map(|z| holevo(((total - z).norm() / (n - 1) as f64).min(1.0)))
                .collect();
            if loo.iter().any(|v| v.is_infinite()) {
                f64::INFINITY
            } else {
                let mean = loo.iter().sum::<f64>() / n as f64;
                let ss: f64 = loo.iter().map(|v| (v - mean).powi(2)).sum();
                ((n - 1) as f64 / n as f64 * ss).sqrt()
            }
        };
        Self {
            n_trials: n,
            sharpness,
            holevo_variance,
            stderr_variance,
            errors: errors.to_vec(),
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.holevo_variance.is_infinite()
    }
}

fn holevo(sharpness: f64) -> f64 {
    if sharpness < MIN_SHARPNESS {
        f64::INFINITY
    } else {
        1.0 / (sharpness * sharpness) - 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedTrial {
    pub index: usize,
    pub seed: u64,
    pub error: Error,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub master_seed: u64,
    /// Statistics over the trials that completed.
    pub stats: EnsembleStats,
    pub trials: Vec<TrialResult>,
    pub flagged: Vec<FlaggedTrial>,
}

pub fn run_ensemble(strategy: &Strategy, n_trials: usize, master_seed: u64) -> Result<Ensemble> {
    run_ensemble_with(strategy, n_trials, master_seed, PhaseConvention::default())
}

pub fn run_ensemble_with(
    strategy: &Strategy,
    n_trials: usize,
    master_seed: u64,
    convention: PhaseConvention,
) -> Result<Ensemble> {
    if n_trials < 2 {
        return Err(invalid("an ensemble needs at least 2 trials"));
    }
    let one = |i: usize| {
        let seed = trial_seed(master_seed, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let random_phase = TAU * rng.random::<f64>();
        let outcome_seed = rng.next_u64();
        let (phi0, theta0) = match convention {
            PhaseConvention::RandomLo { phi0 } => (phi0, random_phase),
            PhaseConvention::RandomSignal { theta0 } => (random_phase, theta0),
        };
        (seed, run_trial(strategy, phi0, theta0, outcome_seed))
    };
    let results: Vec<(u64, Result<TrialResult>)> = match strategy.sim.workers {
        0 => (0..n_trials).into_par_iter().map(one).collect(),
        w => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Configuration(format!("cannot start {w} workers: {e}")))?
            .install(|| (0..n_trials).into_par_iter().map(one).collect()),
    };

    let mut trials = Vec::with_capacity(n_trials);
    let mut flagged = Vec::new();
    for (index, (seed, result)) in results.into_iter().enumerate() {
        match result {
            Ok(t) => trials.push(t),
            Err(error @ (Error::DegeneratePosterior | Error::UndefinedMean { .. })) => {
                flagged.push(FlaggedTrial { index, seed, error })
            }
            Err(e) => return Err(e),
        }
    }
    let errors: Vec<f64> = trials.iter().map(|t| t.error).collect();
    Ok(Ensemble {
        master_seed,
        stats: EnsembleStats::from_errors(&errors),
        trials,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedRuns {
    pub runs: Vec<EnsembleStats>,
    pub mean_variance: f64,
    /// Standard error of the mean over runs.
    pub stderr_variance: f64,
}

/// `runs` independent ensembles; run `r` uses master seed
/// `trial_seed(master_seed, r)`.
pub fn run_repeated(strategy: &Strategy, runs: usize, n_trials: usize, master_seed: u64) -> Result<RepeatedRuns> {
    if runs < 2 {
        return Err(invalid("repeated-run mode needs at least 2 runs"));
    }
    let stats = (0..runs)
        .map(|r| run_ensemble(strategy, n_trials, trial_seed(master_seed, r as u64)).map(|e| e.stats))
        .collect::<Result<Vec<_>>>()?;
    let v: Vec<f64> = stats.iter().map(|s| s.holevo_variance).collect();
    let mean = v.iter().sum::<f64>() / runs as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    Ok(RepeatedRuns {
        runs: stats,
        mean_variance: mean,
        stderr_variance: (var / runs as f64).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha_sq: f64,
    pub objective: Objective,
    pub steps: usize,
    pub pnr: u32,
    pub eta: f64,
    pub variance: f64,
    /// `variance · 4|α|²η`
    pub variance_x_qfi: f64,
    /// Standard error of `variance_x_qfi`.
    pub stderr: f64,
    pub crlb: f64,
    pub heterodyne: f64,
    pub n_trials: usize,
    pub seed: u64,
}

impl SweepRow {
    pub fn from_stats(sim: &SimulationConfig, stats: &EnsembleStats, seed: u64) -> Result<Self> {
        let b = bounds(sim.alpha_sq, sim.detector.efficiency)?;
        let qfi = 4.0 * sim.alpha_sq * sim.detector.efficiency;
        Ok(Self {
            alpha_sq: sim.alpha_sq,
            objective: sim.objective,
            steps: sim.steps,
            pnr: sim.detector.pnr,
            eta: sim.detector.efficiency,
            variance: stats.holevo_variance,
            variance_x_qfi: stats.holevo_variance * qfi,
            stderr: stats.stderr_variance * qfi,
            crlb: b.crlb,
            heterodyne: b.heterodyne,
            n_trials: stats.n_trials,
            seed,
        })
    }
}

pub fn sweep_alpha(
    base: &SimulationConfig,
    alpha_sq_list: &[f64],
    n_trials: usize,
    master_seed: u64,
) -> Result<Vec<SweepRow>> {
    sweep_alpha_with(base, alpha_sq_list, n_trials, master_seed, Strategy::prepare)
}

/// Like [`sweep_alpha`], with the caller supplying each point's strategy
/// (for instance from LUT files).
pub fn sweep_alpha_with<F>(
    base: &SimulationConfig,
    alpha_sq_list: &[f64],
    n_trials: usize,
    master_seed: u64,
    mut prepare: F,
) -> Result<Vec<SweepRow>>
where
    F: FnMut(&SimulationConfig) -> Result<Strategy>,
{
    if alpha_sq_list.is_empty() {
        return Err(invalid("alpha_sq list must be nonempty"));
    }
    alpha_sq_list
        .iter()
        .map(|&alpha_sq| {
            let sim = SimulationConfig {
                alpha_sq,
                ..base.clone()
            };
            let strategy = prepare(&sim)?;
            let ens = run_ensemble(&strategy, n_trials, master_seed)?;
            SweepRow::from_stats(&sim, &ens.stats, master_seed)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub mean_error: Option<f64>,
    /// `None` with fewer than 2 trials.
    pub stderr: Option<f64>,
    /// Departure of the bin mean from the global mean, in standard errors.
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub n_trials: usize,
    pub global_mean: f64,
    pub bins: Vec<BiasBin>,
    pub max_abs_z: f64,
    /// Circular-linear correlation between the first LO phase and the error.
    pub correlation: f64,
    /// Asymptotic p-value of `correlation` under independence (`nR² ~ χ²₂`).
    pub p_value: f64,
}

impl BiasReport {
    pub fn correlation_detected(&self, p_threshold: f64) -> bool {
        self.p_value < p_threshold
    }
}

pub fn bias_analysis(trials: &[TrialResult], bins: usize) -> Result<BiasReport> {
    let theta: Vec<f64> = trials.iter().map(|t| t.initial_lo_phase).collect();
    let errors: Vec<f64> = trials.iter().map(|t| t.error).collect();
    bias_from_pairs(&theta, &errors, bins)
}

pub fn bias_from_pairs(theta0: &[f64], errors: &[f64], bins: usize) -> Result<BiasReport> {
    if theta0.len() != errors.len() {
        return Err(invalid("phase and error lists differ in length"));
    }
    let n = errors.len();
    if n < MIN_BIAS_TRIALS {
        return Err(invalid(format!("bias analysis needs at least {MIN_BIAS_TRIALS} trials, got {n}")));
    }
    if bins == 0 {
        return Err(invalid("bins must be positive"));
    }
    let global_mean = errors.iter().sum::<f64>() / n as f64;
    let width = TAU / bins as f64;
    let mut grouped = vec![Vec::new(); bins];
    for (t, e) in theta0.iter().zip(errors) {
        let b = ((wrap_tau(*t) / width) as usize).min(bins - 1);
        grouped[b].push(*e);
    }
    let mut max_abs_z: f64 = 0.0;
    let bins: Vec<BiasBin> = grouped
        .iter()
        .enumerate()
        .map(|(i, es)| {
            let count = es.len();
            let mean_error = (count > 0).then(|| es.iter().sum::<f64>() / count as f64);
            let stderr = mean_error.filter(|_| count >= 2).map(|m| {
                let var = es.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (count - 1) as f64;
                (var / count as f64).sqrt()
            });
            let z = match (mean_error, stderr) {
                (Some(m), Some(s)) if s > 0.0 => Some((m - global_mean) / s),
                (Some(m), Some(_)) if m == global_mean => Some(0.0),
                _ => None,
            };
            if let Some(z) = z {
                max_abs_z = max_abs_z.max(z.abs());
            }
            BiasBin {
                lo: i as f64 * width,
                hi: (i + 1) as f64 * width,
                count,
                mean_error,
                stderr,
                z,
            }
        })
        .collect();

    let cos: Vec<f64> = theta0.iter().map(|t| t.cos()).collect();
    let sin: Vec<f64> = theta0.iter().map(|t| t.sin()).collect();
    let r_xc = pearson(errors, &cos);
    let r_xs = pearson(errors, &sin);
    let r_cs = pearson(&cos, &sin);
    let r2 = ((r_xc * r_xc + r_xs * r_xs - 2.0 * r_xc * r_xs * r_cs) / (1.0 - r_cs * r_cs)).clamp(0.0, 1.0);
    Ok(BiasReport {
        n_trials: n,
        global_mean,
        bins,
        max_abs_z,
        correlation: r2.sqrt(),
        p_value: (-(n as f64) * r2 / 2.0).exp(),
    })
}

/// Pearson correlation; 0 when either input is constant.
fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Copies of `trials` with `amplitude · sin(θ₀)` added to each error.
pub fn inject_sinusoid(trials: &[TrialResult], amplitude: f64) -> Vec<TrialResult> {
    trials
        .iter()
        .map(|t| {
            let mut t = t.clone();
            t.error = wrap_pi(t.error + amplitude * t.initial_lo_phase.sin());
            t.final_estimate = wrap_tau(t.phi0 + t.error);
            t
        })
        .collect()
}

/// Posterior reached after replaying a trial's record with its settings,
/// in the chain frame. Used to audit stored trials.
pub fn replay_posterior(strategy: &Strategy, trial: &TrialResult) -> Result<PhaseDistribution> {
    let cfg = &strategy.controller;
    let mut state = AdaptiveState::initial(cfg.grid_size)?;
    for (n, s) in trial.record.iter().zip(&trial.lo_history) {
        state = adaptive_step(&state, *n, s, &cfg.detector, cfg.alpha_amp, cfg.grid_size)?;
    }
    Ok(state.prior)
}
