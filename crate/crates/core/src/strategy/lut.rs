//! Precomputed controller tables.
//!
//! The record LUT maps every detection record shorter than the switch step to
//! the optimal next setting, found by replaying the deterministic Bayesian
//! chain from the uniform prior. The variance LUT maps the variance of a
//! zero-mean Gaussian prior to the optimal amplitude and unsigned offset.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;

use crate::distribution::PhaseDistribution;
use crate::error::{invalid, Error, Result};
use crate::optics::{likelihood_row, DetectorModel, DisplacementSetting};

use super::objective::Objective;
use super::optimizer::{DisplacementOptimizer, OptimizationGrids};

pub const DEFAULT_K_SWITCH: usize = 9;
pub const DEFAULT_RECORD_CAP: usize = 4_000_000;

/// Bayesian update for one step: LO at `argmax(prior) + offset`.
pub fn advance(
    prior: &PhaseDistribution,
    setting: &DisplacementSetting,
    outcome: u32,
    alpha_amp: f64,
    det: &DetectorModel,
) -> Result<PhaseDistribution> {
    let theta = setting.lo_phase(prior.argmax_phase());
    let row = likelihood_row(
        outcome,
        theta,
        alpha_amp,
        setting.amplitude,
        det,
        prior.grid_size(),
    )?;
    prior.bayes_update(&row)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordLut {
    pnr: u32,
    k_switch: usize,
    /// Records ordered by length, then lexicographically.
    entries: Vec<DisplacementSetting>,
}

impl RecordLut {
    /// `Σ_{j<k_switch} (m+1)^j`
    pub fn entry_count(pnr: u32, k_switch: usize) -> u128 {
        let base = pnr as u128 + 1;
        (0..k_switch).map(|j| base.pow(j as u32)).sum()
    }

    pub fn from_entries(pnr: u32, k_switch: usize, entries: Vec<DisplacementSetting>) -> Result<Self> {
        if k_switch < 1 {
            return Err(invalid("k_switch must be at least 1"));
        }
        let expected = Self::entry_count(pnr, k_switch);
        if entries.len() as u128 != expected {
            return Err(invalid(format!(
                "record LUT for PNR({pnr}), k_switch {k_switch} needs {expected} entries, got {}",
                entries.len()
            )));
        }
        Ok(Self {
            pnr,
            k_switch,
            entries,
        })
    }

    pub fn pnr(&self) -> u32 {
        self.pnr
    }

    pub fn k_switch(&self) -> usize {
        self.k_switch
    }

    pub fn entries(&self) -> &[DisplacementSetting] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, record: &[u32]) -> Option<usize> {
        record_index(self.pnr, self.k_switch, record)
    }

    pub fn get(&self, record: &[u32]) -> Option<DisplacementSetting> {
        self.index_of(record).map(|i| self.entries[i])
    }
}

fn record_index(pnr: u32, k_switch: usize, record: &[u32]) -> Option<usize> {
    if record.len() >= k_switch || record.iter().any(|d| *d > pnr) {
        return None;
    }
    let base = pnr as usize + 1;
    let offset: usize = (0..record.len()).map(|j| base.pow(j as u32)).sum();
    let digits = record.iter().fold(0usize, |acc, d| acc * base + *d as usize);
    Some(offset + digits)
}

/// Enumerates every record of length `< k_switch` and stores the optimal next
/// setting for each.
pub fn build_record_lut(
    alpha_amp: f64,
    det: &DetectorModel,
    objective: Objective,
    grids: &OptimizationGrids,
    k_switch: usize,
    grid_size: usize,
) -> Result<RecordLut> {
    build_record_lut_capped(
        alpha_amp,
        det,
        objective,
        grids,
        k_switch,
        grid_size,
        DEFAULT_RECORD_CAP,
    )
}

pub fn build_record_lut_capped(
    alpha_amp: f64,
    det: &DetectorModel,
    objective: Objective,
    grids: &OptimizationGrids,
    k_switch: usize,
    grid_size: usize,
    cap: usize,
) -> Result<RecordLut> {
    if k_switch < 1 {
        return Err(invalid("k_switch must be at least 1"));
    }
    if !objective.is_optimized() {
        return Err(invalid("the non-optimized strategy needs no record LUT"));
    }
    let count = RecordLut::entry_count(det.pnr, k_switch);
    if count > cap as u128 {
        return Err(Error::ResourceLimit {
            entries: count,
            cap,
        });
    }
    let optimizer = DisplacementOptimizer::new(alpha_amp, det, grids, grid_size)?;
    let builder = ChainBuilder {
        optimizer: &optimizer,
        objective,
        k_switch,
    };
    let root = PhaseDistribution::uniform(grid_size)?;
    let (root_setting, _) = optimizer.optimize(&root, objective)?;

    let mut found = vec![(Vec::new(), root_setting)];
    if k_switch > 1 {
        let subtrees: Vec<Result<Vec<(Vec<u32>, DisplacementSetting)>>> = (0..=det.pnr)
            .into_par_iter()
            .map(|n| {
                let mut out = Vec::new();
                builder.visit_child(&[], &root, &root_setting, n, &mut out)?;
                Ok(out)
            })
            .collect();
        for subtree in subtrees {
            found.extend(subtree?);
        }
    }

    let mut entries = vec![root_setting; count as usize];
    for (record, setting) in found {
        let i = record_index(det.pnr, k_switch, &record).expect("enumerated record is in range");
        entries[i] = setting;
    }
    RecordLut::from_entries(det.pnr, k_switch, entries)
}

struct ChainBuilder<'a> {
    optimizer: &'a DisplacementOptimizer,
    objective: Objective,
    k_switch: usize,
}

impl ChainBuilder<'_> {
    fn visit_child(
        &self,
        parent_record: &[u32],
        parent_prior: &PhaseDistribution,
        parent_setting: &DisplacementSetting,
        outcome: u32,
        out: &mut Vec<(Vec<u32>, DisplacementSetting)>,
    ) -> Result<()> {
        let mut record = parent_record.to_vec();
        record.push(outcome);
        let det = self.optimizer.detector();
        match advance(
            parent_prior,
            parent_setting,
            outcome,
            self.optimizer.alpha_amp(),
            det,
        ) {
            Ok(prior) => {
                let (setting, _) = self.optimizer.optimize(&prior, self.objective)?;
                out.push((record.clone(), setting));
                if record.len() + 1 < self.k_switch {
                    for n in 0..=det.pnr {
                        self.visit_child(&record, &prior, &setting, n, out)?;
                    }
                }
                Ok(())
            }
            // zero-probability record: the whole subtree keeps the parent's setting
            Err(Error::DegeneratePosterior) => {
                fill_unreachable(&record, parent_setting, det.pnr, self.k_switch, out);
                Ok(())
            }
            Err(e) => Err(e),
        }
    }
}

fn fill_unreachable(
    record: &[u32],
    setting: &DisplacementSetting,
    pnr: u32,
    k_switch: usize,
    out: &mut Vec<(Vec<u32>, DisplacementSetting)>,
) {
    out.push((record.to_vec(), *setting));
    if record.len() + 1 < k_switch {
        for n in 0..=pnr {
            let mut child = record.to_vec();
            child.push(n);
            fill_unreachable(&child, setting, pnr, k_switch, out);
        }
    }
}

/// Record LUT filled on demand. Lookups replay the same chain as
/// [`build_record_lut`], so every entry equals the full table's entry.
#[derive(Debug)]
pub struct RecordCache {
    optimizer: Arc<DisplacementOptimizer>,
    objective: Objective,
    k_switch: usize,
    cache: RwLock<HashMap<Vec<u32>, DisplacementSetting>>,
}

impl RecordCache {
    pub fn new(
        alpha_amp: f64,
        det: &DetectorModel,
        objective: Objective,
        grids: &OptimizationGrids,
        k_switch: usize,
        grid_size: usize,
    ) -> Result<Self> {
        if k_switch < 1 {
            return Err(invalid("k_switch must be at least 1"));
        }
        if !objective.is_optimized() {
            return Err(invalid("the non-optimized strategy needs no record LUT"));
        }
        let optimizer = DisplacementOptimizer::new(alpha_amp, det, grids, grid_size)?;
        Ok(Self {
            optimizer: Arc::new(optimizer),
            objective,
            k_switch,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn k_switch(&self) -> usize {
        self.k_switch
    }

    /// Number of records computed so far.
    pub fn len(&self) -> usize {
        self.cache.read().expect("record cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn setting_for(&self, record: &[u32]) -> Result<DisplacementSetting> {
        let det = *self.optimizer.detector();
        if record.len() >= self.k_switch || record.iter().any(|d| *d > det.pnr) {
            return Err(invalid(format!("record {record:?} is outside the LUT")));
        }
        if let Some(s) = self.cache.read().expect("record cache lock").get(record) {
            return Ok(*s);
        }
        let mut prior = PhaseDistribution::uniform(self.optimizer.grid_size())?;
        for i in 0..record.len() {
            let parent = self.setting_for(&record[..i])?;
            match advance(&prior, &parent, record[i], self.optimizer.alpha_amp(), &det) {
                Ok(next) => prior = next,
                Err(Error::DegeneratePosterior) => return self.store(record, parent),
                Err(e) => return Err(e),
            }
        }
        let (setting, _) = self.optimizer.optimize(&prior, self.objective)?;
        self.store(record, setting)
    }

    fn store(&self, record: &[u32], setting: DisplacementSetting) -> Result<DisplacementSetting> {
        self.cache
            .write()
            .expect("record cache lock")
            .insert(record.to_vec(), setting);
        Ok(setting)
    }
}

/// Where Case-I settings come from.
#[derive(Debug, Clone)]
pub enum RecordSource {
    Table(Arc<RecordLut>),
    Lazy(Arc<RecordCache>),
}

impl RecordSource {
    pub fn lookup(&self, record: &[u32]) -> Result<DisplacementSetting> {
        match self {
            RecordSource::Table(lut) => lut.get(record).ok_or_else(|| {
                Error::Configuration(format!("record {record:?} is not in the record LUT"))
            }),
            RecordSource::Lazy(cache) => cache.setting_for(record),
        }
    }

    pub fn k_switch(&self) -> usize {
        match self {
            RecordSource::Table(lut) => lut.k_switch(),
            RecordSource::Lazy(cache) => cache.k_switch(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEntry {
    pub amplitude: f64,
    /// Unsigned offset; the sign comes from the skew correction.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceLut {
    sigma_sq: Vec<f64>,
    entries: Vec<VarianceEntry>,
}

/// `points` values log-spaced with `log₁₀σ²` from `log_min` to `log_max`.
pub fn sigma_grid(points: usize, log_min: f64, log_max: f64) -> Result<Vec<f64>> {
    if points == 0 || !(log_max >= log_min) {
        return Err(invalid("sigma grid needs at least one point and log_min <= log_max"));
    }
    if points == 1 {
        return Ok(vec![10f64.powf(log_min)]);
    }
    Ok((0..points)
        .map(|i| 10f64.powf(log_min + (log_max - log_min) * i as f64 / (points - 1) as f64))
        .collect())
}

/// 64 points, `log₁₀σ² ∈ [−4, 0.5]`.
pub fn default_sigma_grid() -> Vec<f64> {
    sigma_grid(64, -4.0, 0.5).expect("default sigma grid is valid")
}

impl VarianceLut {
    pub fn from_parts(sigma_sq: Vec<f64>, entries: Vec<VarianceEntry>) -> Result<Self> {
        if sigma_sq.is_empty() || sigma_sq.len() != entries.len() {
            return Err(invalid("variance LUT needs one entry per sigma grid point"));
        }
        if sigma_sq.iter().any(|s| !(*s > 0.0)) || sigma_sq.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("sigma grid must be positive and strictly increasing"));
        }
        if entries.iter().any(|e| !(e.delta >= 0.0) || !(e.amplitude >= 0.0)) {
            return Err(invalid("variance LUT entries must be nonnegative"));
        }
        Ok(Self { sigma_sq, entries })
    }

    pub fn sigma_sq(&self) -> &[f64] {
        &self.sigma_sq
    }

    pub fn entries(&self) -> &[VarianceEntry] {
        &self.entries
    }

    /// Piecewise-linear interpolation in `log₁₀σ²`, clamped at the ends.
    pub fn lookup(&self, sigma_sq: f64) -> VarianceEntry {
        let n = self.sigma_sq.len();
        if !(sigma_sq > self.sigma_sq[0]) {
            return self.entries[0];
        }
        if sigma_sq >= self.sigma_sq[n - 1] {
            return self.entries[n - 1];
        }
        let i = self.sigma_sq.partition_point(|s| *s <= sigma_sq) - 1;
        let (x0, x1) = (self.sigma_sq[i].log10(), self.sigma_sq[i + 1].log10());
        let t = (sigma_sq.log10() - x0) / (x1 - x0);
        let (a, b) = (self.entries[i], self.entries[i + 1]);
        VarianceEntry {
            amplitude: a.amplitude + t * (b.amplitude - a.amplitude),
            delta: a.delta + t * (b.delta - a.delta),
        }
    }
}

/// Optimal setting for a zero-mean Gaussian prior of each variance.
///
/// Broad priors use the wrapped Gaussian on the `grid_size` grid. Priors with
/// `10σ < π` are sampled on a local window of at least 8 points per σ out to
/// ±10σ, which keeps narrow priors resolved regardless of `grid_size`.
pub fn build_variance_lut(
    alpha_amp: f64,
    det: &DetectorModel,
    objective: Objective,
    grids: &OptimizationGrids,
    sigma_sq: &[f64],
    grid_size: usize,
) -> Result<VarianceLut> {
    if sigma_sq.is_empty() {
        return Err(invalid("sigma grid must be nonempty"));
    }
    if !objective.is_optimized() {
        return Err(invalid("the non-optimized strategy needs no variance LUT"));
    }
    let needs_full = sigma_sq.iter().any(|s| 10.0 * s.sqrt() >= PI);
    let full = if needs_full {
        Some(DisplacementOptimizer::new(alpha_amp, det, grids, grid_size)?)
    } else {
        None
    };
    let entries = sigma_sq
        .par_iter()
        .map(|&var| {
            if !(var > 0.0) || !var.is_finite() {
                return Err(invalid(format!("sigma^2 must be positive, got {var}")));
            }
            let sigma = var.sqrt();
            let (setting, _) = if 10.0 * sigma >= PI {
                let prior = PhaseDistribution::wrapped_gaussian(grid_size, 0.0, sigma)?;
                full.as_ref()
                    .expect("full-grid optimizer exists")
                    .optimize(&prior, objective)?
            } else {
                let h = (2.0 * PI / grid_size as f64).min(sigma / 8.0);
                let half = (10.0 * sigma / h).ceil() as i64;
                let phases: Vec<f64> = (-half..=half).map(|r| r as f64 * h).collect();
                let weights: Vec<f64> = phases
                    .iter()
                    .map(|p| (-p * p / (2.0 * var)).exp())
                    .collect();
                let total: f64 = weights.iter().sum();
                let weights = weights.into_iter().map(|w| w / total).collect();
                let opt = DisplacementOptimizer::with_phases(alpha_amp, det, grids, grid_size, phases)?;
                opt.optimize_relative(weights, objective)?
            };
            Ok(VarianceEntry {
                amplitude: setting.amplitude,
                delta: setting.offset.abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    VarianceLut::from_parts(sigma_sq.to_vec(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::beta_fi;
    use crate::strategy::optimizer::optimize_displacement;
    use crate::strategy::objective::evaluate;

    fn small_grids(a: f64) -> OptimizationGrids {
        OptimizationGrids::linear(a, 12, 3.0, 12).unwrap()
    }

    #[test]
    fn entry_counts() {
        assert_eq!(RecordLut::entry_count(3, 1), 1);
        assert_eq!(RecordLut::entry_count(3, 9), 87381);
        assert_eq!(RecordLut::entry_count(1, 4), 15);
    }

    #[test]
    fn single_entry_lut() {
        let det = DetectorModel::ideal(3);
        let lut = build_record_lut(1.0, &det, Objective::Sharpness, &small_grids(1.0), 1, 32).unwrap();
        assert_eq!(lut.len(), 1);
        assert!(lut.get(&[]).is_some());
        assert!(lut.get(&[0]).is_none());
    }

    #[test]
    fn full_size_count_with_tiny_search() {
        let det = DetectorModel::ideal(3);
        let grids = OptimizationGrids::linear(1.0, 2, 3.0, 2).unwrap();
        let lut = build_record_lut(1.0, &det, Objective::MutualInformation, &grids, 9, 8).unwrap();
        assert_eq!(lut.len(), 87381);
    }

    #[test]
    fn resource_cap_is_enforced() {
        let det = DetectorModel::ideal(3);
        let r = build_record_lut_capped(1.0, &det, Objective::Sharpness, &small_grids(1.0), 9, 32, 1000);
        assert!(matches!(r, Err(Error::ResourceLimit { entries: 87381, cap: 1000 })));
    }

    #[test]
    fn first_level_matches_single_step_replay() {
        let det = DetectorModel::ideal(3);
        let a = 1.2;
        let grids = small_grids(a);
        let lut = build_record_lut(a, &det, Objective::Sharpness, &grids, 3, 64).unwrap();
        let root = PhaseDistribution::uniform(64).unwrap();
        let root_setting = optimize_displacement(&root, Objective::Sharpness, &grids, &det, a).unwrap();
        assert_eq!(lut.get(&[]).unwrap(), root_setting);
        for n in 0..=3 {
            let post = advance(&root, &root_setting, n, a, &det).unwrap();
            let expected = optimize_displacement(&post, Objective::Sharpness, &grids, &det, a).unwrap();
            assert_eq!(lut.get(&[n]).unwrap(), expected);
        }
    }

    #[test]
    fn lazy_cache_reproduces_full_table() {
        let det = DetectorModel::ideal(1);
        let a = 1.0;
        let grids = small_grids(a);
        let lut = build_record_lut(a, &det, Objective::MutualInformation, &grids, 4, 64).unwrap();
        let cache = RecordCache::new(a, &det, Objective::MutualInformation, &grids, 4, 64).unwrap();
        for len in 0..4u32 {
            for code in 0..(1u32 << len) {
                let record: Vec<u32> = (0..len).rev().map(|b| (code >> b) & 1).collect();
                assert_eq!(cache.setting_for(&record).unwrap(), lut.get(&record).unwrap());
            }
        }
        assert_eq!(cache.len(), 15);
        assert!(cache.setting_for(&[0, 0, 0, 0]).is_err());
    }

    #[test]
    fn variance_lookup_interpolates_and_clamps() {
        let lut = VarianceLut::from_parts(
            vec![0.01, 0.1, 1.0],
            vec![
                VarianceEntry { amplitude: 1.0, delta: 0.2 },
                VarianceEntry { amplitude: 2.0, delta: 0.4 },
                VarianceEntry { amplitude: 4.0, delta: 0.8 },
            ],
        )
        .unwrap();
        assert_eq!(lut.lookup(1e-5).amplitude, 1.0);
        assert_eq!(lut.lookup(10.0).delta, 0.8);
        let mid = lut.lookup(10f64.powf(-1.5));
        assert!((mid.amplitude - 1.5).abs() < 1e-12 && (mid.delta - 0.3).abs() < 1e-12);
        assert_eq!(lut.lookup(0.1), lut.entries()[1]);
    }

    #[test]
    fn sigma_grid_defaults() {
        let g = default_sigma_grid();
        assert_eq!(g.len(), 64);
        assert!((g[0].log10() + 4.0).abs() < 1e-12);
        assert!((g[63].log10() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn flat_prior_entry_matches_uniform_optimum() {
        let det = DetectorModel::ideal(3);
        let a = 1.5;
        let grids = OptimizationGrids::for_alpha(a);
        let lut = build_variance_lut(a, &det, Objective::Sharpness, &grids, &[400.0], 256).unwrap();
        let flat = optimize_displacement(
            &PhaseDistribution::uniform(256).unwrap(),
            Objective::Sharpness,
            &grids,
            &det,
            a,
        )
        .unwrap();
        // every offset is (nearly) equivalent on a flat prior, so compare values
        let uniform = PhaseDistribution::uniform(256).unwrap();
        let e = lut.entries()[0];
        let from_lut = evaluate(Objective::Sharpness, &uniform, &DisplacementSetting::new(e.amplitude, e.delta), &det, a).unwrap();
        let best = evaluate(Objective::Sharpness, &uniform, &flat, &det, a).unwrap();
        assert!((from_lut - best).abs() < 1e-9, "{from_lut} vs {best}");
    }

    #[test]
    fn narrow_prior_amplitude_approaches_fisher_optimum() {
        let det = DetectorModel::ideal(3);
        let a = (50.0f64 / 30.0).sqrt();
        let grids = OptimizationGrids::for_alpha(a);
        let sig = [1e-3, 1e-2];
        let lut = build_variance_lut(a, &det, Objective::MutualInformation, &grids, &sig, 256).unwrap();
        for e in lut.entries() {
            let ratio = e.amplitude / beta_fi(e.delta, a).unwrap();
            assert!((ratio - 1.0).abs() <= 0.05, "ratio {ratio} at {e:?}");
        }
    }
}
