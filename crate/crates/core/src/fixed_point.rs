//! Integer emulation of the controller's arithmetic: 256 phase nodes holding
//! 10-bit probabilities, truncating products and power-of-two rescaling.

use std::f64::consts::TAU;

use crate::distribution::{argmax_first, wrap_tau, PhaseDistribution};
use crate::error::{invalid, Error, Result};

pub const FP_GRID: usize = 256;
pub const FP_BITS: u32 = 10;
pub const FP_MAX: u16 = (1 << FP_BITS) - 1;
/// Number of distinct phases the LO DAC can produce.
pub const DAC_LEVELS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedPointDist {
    values: Vec<u16>,
    /// Accumulated power-of-two rescaling applied so far.
    scale_exponent: i32,
}

impl FixedPointDist {
    pub fn uniform() -> Self {
        Self {
            values: vec![FP_MAX; FP_GRID],
            scale_exponent: 0,
        }
    }

    pub fn from_values(values: Vec<u16>, scale_exponent: i32) -> Result<Self> {
        if values.len() != FP_GRID {
            return Err(invalid(format!(
                "fixed-point distributions have {FP_GRID} nodes, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| *v > FP_MAX) {
            return Err(invalid(format!("fixed-point values must be <= {FP_MAX}")));
        }
        if values.iter().all(|v| *v == 0) {
            return Err(Error::DegeneratePosterior);
        }
        Ok(Self {
            values,
            scale_exponent,
        })
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    pub fn scale_exponent(&self) -> i32 {
        self.scale_exponent
    }

    pub fn max_value(&self) -> u16 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    /// Lowest index among the maxima.
    pub fn argmax_node(&self) -> usize {
        let mut best = 0;
        for (j, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = j;
            }
        }
        best
    }
}

/// `round(P_j / max P · 1023)`.
pub fn quantize(dist: &PhaseDistribution) -> Result<FixedPointDist> {
    if dist.grid_size() != FP_GRID {
        return Err(invalid(format!(
            "fixed-point mode needs {FP_GRID} nodes, got {}",
            dist.grid_size()
        )));
    }
    let values = quantize_row(dist.values())?;
    FixedPointDist::from_values(values, 0)
}

/// Peak-normalized 10-bit copy of a nonnegative row. An all-zero row stays
/// all zero.
pub fn quantize_row(row: &[f64]) -> Result<Vec<u16>> {
    if row.len() != FP_GRID {
        return Err(invalid(format!(
            "fixed-point rows have {FP_GRID} entries, got {}",
            row.len()
        )));
    }
    if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(invalid("row entries must be finite and nonnegative"));
    }
    let peak = row[argmax_first(row)];
    if peak == 0.0 {
        return Ok(vec![0; FP_GRID]);
    }
    let scale = FP_MAX as f64 / peak;
    Ok(row.iter().map(|v| (v * scale).round() as u16).collect())
}

/// 10×10-bit products truncated back to 10 bits, then rescaled.
pub fn fp_bayes_update(dist: &FixedPointDist, row: &[u16]) -> Result<FixedPointDist> {
    if row.len() != FP_GRID {
        return Err(invalid(format!(
            "likelihood row has {} entries, expected {FP_GRID}",
            row.len()
        )));
    }
    if row.iter().any(|v| *v > FP_MAX) {
        return Err(invalid(format!("likelihood entries must be <= {FP_MAX}")));
    }
    let values: Vec<u16> = dist
        .values
        .iter()
        .zip(row)
        .map(|(p, l)| ((*p as u32 * *l as u32) >> FP_BITS) as u16)
        .collect();
    quasi_normalize(&FixedPointDist {
        values,
        scale_exponent: dist.scale_exponent,
    })
}

/// Shifts every value left so the maximum's top bit lands on bit 9.
pub fn quasi_normalize(dist: &FixedPointDist) -> Result<FixedPointDist> {
    let max = dist.max_value();
    if max == 0 {
        return Err(Error::DegeneratePosterior);
    }
    let p = (FP_BITS - 1) as i32 - (15 - max.leading_zeros() as i32);
    let values = if p >= 0 {
        dist.values.iter().map(|v| v << p).collect()
    } else {
        dist.values.iter().map(|v| v >> -p).collect()
    };
    Ok(FixedPointDist {
        values,
        scale_exponent: dist.scale_exponent + p,
    })
}

/// Nearest of the 256 DAC phases `2πk/256`, in `[0, 2π)`.
pub fn dac_quantize_phase(theta: f64) -> f64 {
    let step = TAU / DAC_LEVELS as f64;
    let k = (wrap_tau(theta) / step).round() as usize % DAC_LEVELS;
    k as f64 * step
}

/// Floating-point view of the fixed-point values, normalized.
pub fn to_distribution(dist: &FixedPointDist) -> Result<PhaseDistribution> {
    PhaseDistribution::from_weights(dist.values.iter().map(|v| *v as f64).collect())
}
