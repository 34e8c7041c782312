//! Exhaustive grid search over LO amplitude and phase offset.
//!
//! Offsets are relative to the prior's argmax node, so the likelihood of
//! every candidate setting depends only on the node position relative to that
//! argmax. [`DisplacementOptimizer`] tabulates those likelihoods once; each
//! search then reduces to dot products of the rotated prior with table rows.

use std::f64::consts::{FRAC_PI_2, LN_2, TAU};

use crate::distribution::PhaseDistribution;
use crate::error::{invalid, Result};
use crate::optics::{mean_count, outcome_pmf_into, DetectorModel, DisplacementSetting};

use super::objective::Objective;

/// Values closer than this are treated as ties.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationGrids {
    beta_points: Vec<f64>,
    delta_points: Vec<f64>,
}

impl OptimizationGrids {
    pub const DEFAULT_POINTS: usize = 64;
    pub const DEFAULT_BETA_MAX_RATIO: f64 = 3.0;

    pub fn new(beta_points: Vec<f64>, delta_points: Vec<f64>) -> Result<Self> {
        if beta_points.is_empty() || delta_points.is_empty() {
            return Err(invalid("optimization grids must be nonempty"));
        }
        if beta_points.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return Err(invalid("beta grid points must be finite and >= 0"));
        }
        if delta_points.iter().any(|d| !d.is_finite() || d.abs() > std::f64::consts::PI) {
            return Err(invalid("delta grid points must lie in [-pi, pi]"));
        }
        if beta_points.windows(2).any(|w| w[1] < w[0])
            || delta_points.windows(2).any(|w| w[1] < w[0])
        {
            return Err(invalid("optimization grids must be sorted ascending"));
        }
        Ok(Self {
            beta_points,
            delta_points,
        })
    }

    /// `beta_count` amplitudes on `[0, beta_max_ratio·|α|]` and `delta_count`
    /// offsets strictly inside `(−π/2, π/2)`, mirrored exactly about zero.
    pub fn linear(
        alpha_amp: f64,
        beta_count: usize,
        beta_max_ratio: f64,
        delta_count: usize,
    ) -> Result<Self> {
        if beta_count == 0 || delta_count == 0 {
            return Err(invalid("optimization grids must be nonempty"));
        }
        if !(beta_max_ratio > 0.0) {
            return Err(invalid("beta_max_ratio must be positive"));
        }
        let beta_max = beta_max_ratio * alpha_amp;
        let beta = if beta_count == 1 {
            vec![beta_max]
        } else {
            (0..beta_count)
                .map(|i| beta_max * i as f64 / (beta_count - 1) as f64)
                .collect()
        };
        let step = std::f64::consts::PI / (delta_count + 1) as f64;
        let half: Vec<f64> = (0..delta_count / 2)
            .map(|i| FRAC_PI_2 - step * (i + 1) as f64)
            .collect();
        let mut delta: Vec<f64> = half.iter().map(|d| -d).collect();
        if delta_count % 2 == 1 {
            delta.push(0.0);
        }
        delta.extend(half.iter().rev());
        Self::new(beta, delta)
    }

    pub fn for_alpha(alpha_amp: f64) -> Self {
        Self::linear(
            alpha_amp,
            Self::DEFAULT_POINTS,
            Self::DEFAULT_BETA_MAX_RATIO,
            Self::DEFAULT_POINTS,
        )
        .expect("default grids are valid")
    }

    pub fn beta_points(&self) -> &[f64] {
        &self.beta_points
    }

    pub fn delta_points(&self) -> &[f64] {
        &self.delta_points
    }

    pub fn len(&self) -> usize {
        self.beta_points.len() * self.delta_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Candidate settings in tie-break order: ascending `|β|`, then ascending
    /// `|Δ|`, then ascending grid index.
    fn search_order(&self) -> Vec<DisplacementSetting> {
        let mut deltas: Vec<(usize, f64)> = self.delta_points.iter().copied().enumerate().collect();
        deltas.sort_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(a.0.cmp(&b.0)));
        self.beta_points
            .iter()
            .flat_map(|b| {
                deltas.iter().map(move |(_, d)| DisplacementSetting {
                    amplitude: *b,
                    offset: *d,
                })
            })
            .collect()
    }
}

/// Outcome probabilities of every candidate setting at a fixed list of
/// phases measured from the prior's argmax.
#[derive(Debug, Clone)]
struct LikelihoodTable {
    phases: Vec<f64>,
    pnr: usize,
    /// `[setting][n][r]` for `n < m`; the top bin follows from completeness.
    like: Vec<f64>,
    /// `[setting][r]`: `Σ_n L ln L` over all outcomes.
    neg_entropy: Vec<f64>,
}

impl LikelihoodTable {
    fn build(
        settings: &[DisplacementSetting],
        phases: Vec<f64>,
        alpha_amp: f64,
        det: &DetectorModel,
    ) -> Self {
        let m = det.pnr as usize;
        let len = phases.len();
        let mut like = vec![0.0; settings.len() * m * len];
        let mut neg_entropy = vec![0.0; settings.len() * len];
        let mut pmf = vec![0.0; m + 1];
        for (s, setting) in settings.iter().enumerate() {
            for (r, phi) in phases.iter().enumerate() {
                let lambda = mean_count(phi - setting.offset, alpha_amp, setting.amplitude, det);
                outcome_pmf_into(lambda, det.pnr, &mut pmf);
                for n in 0..m {
                    like[(s * m + n) * len + r] = pmf[n];
                }
                neg_entropy[s * len + r] = pmf
                    .iter()
                    .filter(|p| **p > 0.0)
                    .map(|p| p * p.ln())
                    .sum();
            }
        }
        Self {
            phases,
            pnr: m,
            like,
            neg_entropy,
        }
    }

    fn row(&self, setting: usize, n: usize) -> &[f64] {
        let len = self.phases.len();
        let start = (setting * self.pnr + n) * len;
        &self.like[start..start + len]
    }

    fn entropy_row(&self, setting: usize) -> &[f64] {
        let len = self.phases.len();
        &self.neg_entropy[setting * len..(setting + 1) * len]
    }
}

/// Weights aligned with a table's phase list plus their first-moment terms.
struct RelativePrior {
    weights: Vec<f64>,
    re: Vec<f64>,
    im: Vec<f64>,
    total: f64,
    z_re: f64,
    z_im: f64,
}

impl RelativePrior {
    fn new(weights: Vec<f64>, phases: &[f64]) -> Self {
        let re: Vec<f64> = weights.iter().zip(phases).map(|(w, p)| w * p.cos()).collect();
        let im: Vec<f64> = weights.iter().zip(phases).map(|(w, p)| w * p.sin()).collect();
        Self {
            total: weights.iter().sum(),
            z_re: re.iter().sum(),
            z_im: im.iter().sum(),
            weights,
            re,
            im,
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize the reduction
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[derive(Debug, Clone)]
pub struct DisplacementOptimizer {
    alpha_amp: f64,
    det: DetectorModel,
    grids: OptimizationGrids,
    settings: Vec<DisplacementSetting>,
    grid_size: usize,
    table: LikelihoodTable,
}

impl DisplacementOptimizer {
    /// Optimizer for priors on a `grid_size`-node grid.
    pub fn new(
        alpha_amp: f64,
        det: &DetectorModel,
        grids: &OptimizationGrids,
        grid_size: usize,
    ) -> Result<Self> {
        let phases = (0..grid_size)
            .map(|r| TAU * r as f64 / grid_size as f64)
            .collect();
        Self::with_phases(alpha_amp, det, grids, grid_size, phases)
    }

    /// Optimizer over an arbitrary set of phases relative to the argmax, used
    /// for narrow priors that need a finer grid than the controller's.
    pub(crate) fn with_phases(
        alpha_amp: f64,
        det: &DetectorModel,
        grids: &OptimizationGrids,
        grid_size: usize,
        phases: Vec<f64>,
    ) -> Result<Self> {
        det.validate()?;
        if !(alpha_amp >= 0.0) || !alpha_amp.is_finite() {
            return Err(invalid(format!("alpha amplitude must be >= 0, got {alpha_amp}")));
        }
        let settings = grids.search_order();
        let table = LikelihoodTable::build(&settings, phases, alpha_amp, det);
        Ok(Self {
            alpha_amp,
            det: *det,
            grids: grids.clone(),
            settings,
            grid_size,
            table,
        })
    }

    pub fn alpha_amp(&self) -> f64 {
        self.alpha_amp
    }

    pub fn detector(&self) -> &DetectorModel {
        &self.det
    }

    pub fn grids(&self) -> &OptimizationGrids {
        &self.grids
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// Best setting for `prior` and its objective value.
    pub fn optimize(
        &self,
        prior: &PhaseDistribution,
        objective: Objective,
    ) -> Result<(DisplacementSetting, f64)> {
        if prior.grid_size() != self.grid_size || self.table.phases.len() != self.grid_size {
            return Err(invalid(format!(
                "prior has {} nodes, optimizer expects {}",
                prior.grid_size(),
                self.grid_size
            )));
        }
        let k = self.grid_size;
        let j0 = prior.argmax_node();
        let values = prior.values();
        let weights = (0..k).map(|r| values[(j0 + r) % k]).collect();
        self.optimize_relative(weights, objective)
    }

    /// Search given weights already aligned with the table's phases.
    pub(crate) fn optimize_relative(
        &self,
        weights: Vec<f64>,
        objective: Objective,
    ) -> Result<(DisplacementSetting, f64)> {
        if !objective.is_optimized() {
            return Err(invalid("the non-optimized strategy does not search for a setting"));
        }
        let prior = RelativePrior::new(weights, &self.table.phases);
        let mut best = (0, f64::NEG_INFINITY);
        for s in 0..self.settings.len() {
            let v = self.value(&prior, s, objective);
            if v > best.1 + TIE_TOLERANCE {
                best = (s, v);
            }
        }
        Ok((self.settings[best.0], best.1))
    }

    fn value(&self, prior: &RelativePrior, s: usize, objective: Objective) -> f64 {
        let m = self.table.pnr;
        match objective {
            Objective::Sharpness => {
                let (mut rest_re, mut rest_im) = (prior.z_re, prior.z_im);
                let mut total = 0.0;
                for n in 0..m {
                    let row = self.table.row(s, n);
                    let re = dot(&prior.re, row);
                    let im = dot(&prior.im, row);
                    rest_re -= re;
                    rest_im -= im;
                    total += re.hypot(im);
                }
                total + rest_re.hypot(rest_im)
            }
            Objective::MutualInformation => {
                let neg_cond = dot(&prior.weights, self.table.entropy_row(s));
                let mut rest = prior.total;
                let mut neg_marginal = 0.0;
                for n in 0..m {
                    let p = dot(&prior.weights, self.table.row(s, n));
                    rest -= p;
                    if p > 0.0 {
                        neg_marginal += p * p.ln();
                    }
                }
                if rest > 0.0 {
                    neg_marginal += rest * rest.ln();
                }
                ((neg_cond - neg_marginal) / LN_2).max(0.0)
            }
            Objective::NonOptimized => unreachable!("rejected before the search"),
        }
    }
}

/// One-off grid search; builds the likelihood table on every call. Prefer a
/// [`DisplacementOptimizer`] when searching many priors.
pub fn optimize_displacement(
    prior: &PhaseDistribution,
    objective: Objective,
    grids: &OptimizationGrids,
    det: &DetectorModel,
    alpha_amp: f64,
) -> Result<DisplacementSetting> {
    if !objective.is_optimized() {
        return Err(invalid("the non-optimized strategy does not search for a setting"));
    }
    let opt = DisplacementOptimizer::new(alpha_amp, det, grids, prior.grid_size())?;
    Ok(opt.optimize(prior, objective)?.0)
}
