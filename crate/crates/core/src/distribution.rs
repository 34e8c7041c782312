//! Discretized phase distributions on the circle.
//!
//! A [`PhaseDistribution`] holds one nonnegative weight per node of a uniform
//! grid, node `j` sitting at phase `2πj/K`. The Riemann weight `2π/K` is folded
//! into the normalization, so a normalized distribution sums to one and the
//! weights are directly the node probabilities.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 256;
pub const MIN_GRID_SIZE: usize = 8;

/// Below this resultant length the circular mean is considered undefined.
pub const MIN_RESULTANT: f64 = 1e-12;
/// Standardized skewness below this is round-off and reported as 0.
pub const SKEW_FLOOR: f64 = 1e-9;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_pi(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_tau(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Phase of node `j` on a `grid_size`-point grid.
#[inline]
pub fn node_phase(j: usize, grid_size: usize) -> f64 {
    TAU * j as f64 / grid_size as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDistribution {
    values: Vec<f64>,
}

/// Circular and wrapped-linear moments of a distribution about a center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularMoments {
    /// Circular mean in `[0, 2π)`. Falls back to the requested center when the
    /// resultant length is below [`MIN_RESULTANT`].
    pub mean_phase: f64,
    pub resultant_length: f64,
    /// `Σ w(φ_j − c)² P_j`
    pub variance: f64,
    /// Standardized third central moment `m₃/σ³`; zero for a degenerate spread.
    pub skewness: f64,
}

/// Uniform prior over `grid_size` nodes.
pub fn uniform_prior(grid_size: usize) -> Result<PhaseDistribution> {
    PhaseDistribution::uniform(grid_size)
}

impl PhaseDistribution {
    pub fn uniform(grid_size: usize) -> Result<Self> {
        check_grid(grid_size)?;
        Ok(Self {
            values: vec![1.0 / grid_size as f64; grid_size],
        })
    }

    /// Builds a distribution from raw weights and normalizes it.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        check_grid(weights.len())?;
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        Self { values: weights }.normalize()
    }

    pub fn point_mass(grid_size: usize, node: usize) -> Result<Self> {
        check_grid(grid_size)?;
        if node >= grid_size {
            return Err(invalid(format!("node {node} outside grid of {grid_size}")));
        }
        let mut values = vec![0.0; grid_size];
        values[node] = 1.0;
        Ok(Self { values })
    }

    /// Wrapped Gaussian with the given mean and standard deviation, sampled at
    /// the nodes. The density is summed over ±3 periods for `sigma ≤ 1`; broader
    /// priors use the Fourier series `1 + 2Σ e^{−n²σ²/2} cos(n x)`, which the
    /// truncated image sum would badly misrepresent.
    pub fn wrapped_gaussian(grid_size: usize, mean: f64, sigma: f64) -> Result<Self> {
        check_grid(grid_size)?;
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(invalid(format!("sigma must be positive, got {sigma}")));
        }
        let two_var = 2.0 * sigma * sigma;
        let weights = (0..grid_size)
            .map(|j| {
                let d = wrap_pi(node_phase(j, grid_size) - mean);
                if sigma <= 1.0 {
                    (-3..=3)
                        .map(|k| {
                            let x = d + TAU * k as f64;
                            (-x * x / two_var).exp()
                        })
                        .sum()
                } else {
                    let mut total = 1.0;
                    for n in 1.. {
                        let c = (-(n * n) as f64 * sigma * sigma / 2.0).exp();
                        if c < 1e-18 {
                            break;
                        }
                        total += 2.0 * c * (n as f64 * d).cos();
                    }
                    total
                }
            })
            .collect();
        Self::from_weights(weights)
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn phase(&self, node: usize) -> f64 {
        node_phase(node, self.values.len())
    }

    pub fn normalize(self) -> Result<Self> {
        let total: f64 = self.values.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegeneratePosterior);
        }
        Ok(Self {
            values: self.values.into_iter().map(|v| v / total).collect(),
        })
    }

    /// Posterior ∝ prior · likelihood, renormalized.
    pub fn bayes_update(&self, likelihood_row: &[f64]) -> Result<Self> {
        if likelihood_row.len() != self.values.len() {
            return Err(invalid(format!(
                "likelihood row has {} entries, grid has {}",
                likelihood_row.len(),
                self.values.len()
            )));
        }
        if likelihood_row.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(invalid("likelihood entries must be finite and nonnegative"));
        }
        let values = self
            .values
            .iter()
            .zip(likelihood_row)
            .map(|(p, l)| p * l)
            .collect();
        Self { values }.normalize()
    }

    /// First circular moment `Σ_j P_j e^{iφ_j}`.
    pub fn first_moment(&self) -> Complex64 {
        let k = self.values.len();
        self.values
            .iter()
            .enumerate()
            .map(|(j, p)| Complex64::from_polar(*p, node_phase(j, k)))
            .sum()
    }

    /// Circular mean phase in `[0, 2π)` and resultant length.
    pub fn circular_mean_sharpness(&self) -> Result<(f64, f64)> {
        let z = self.first_moment();
        let r = z.norm().min(1.0);
        if r < MIN_RESULTANT {
            return Err(Error::UndefinedMean { resultant: r });
        }
        Ok((wrap_tau(z.arg()), r))
    }

    /// Index of the largest weight; lowest index wins ties.
    pub fn argmax_node(&self) -> usize {
        argmax_first(&self.values)
    }

    pub fn argmax_phase(&self) -> f64 {
        self.phase(self.argmax_node())
    }

    pub fn moments_about(&self, center: f64) -> CircularMoments {
        let k = self.values.len();
        let (mut m2, mut m3) = (0.0, 0.0);
        for (j, p) in self.values.iter().enumerate() {
            let d = wrap_pi(node_phase(j, k) - center);
            let d2 = d * d;
            m2 += d2 * p;
            m3 += d2 * d * p;
        }
        let skewness = if m2 < 1e-15 { 0.0 } else { m3 / m2.powf(1.5) };
        let skewness = if skewness.abs() < SKEW_FLOOR { 0.0 } else { skewness };
        let z = self.first_moment();
        let resultant_length = z.norm().min(1.0);
        let mean_phase = if resultant_length < MIN_RESULTANT {
            wrap_tau(center)
        } else {
            wrap_tau(z.arg())
        };
        CircularMoments {
            mean_phase,
            resultant_length,
            variance: m2,
            skewness,
        }
    }

    /// The same distribution circularly shifted by `shift` nodes, so that
    /// `out[(j + shift) mod K] = self[j]`.
    pub fn rotated(&self, shift: isize) -> Self {
        let k = self.values.len();
        let s = shift.rem_euclid(k as isize) as usize;
        let mut values = vec![0.0; k];
        for (j, v) in self.values.iter().enumerate() {
            values[(j + s) % k] = *v;
        }
        Self { values }
    }
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = j;
        }
    }
    best
}

fn check_grid(grid_size: usize) -> Result<()> {
    if grid_size < MIN_GRID_SIZE {
        return Err(invalid(format!(
            "grid_size must be at least {MIN_GRID_SIZE}, got {grid_size}"
        )));
    }
    Ok(())
}
