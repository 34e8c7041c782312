//! Displaced photon counting on a coherent state.
//!
//! The relative phase `Δ = φ − θ_LO` enters the mean count as `−cos Δ`, so
//! `Δ = 0` with `|β| = |α|` displaces the signal to vacuum. Detector
//! imperfections dress the ideal intensity: the efficiency scales the whole
//! detected intensity, the visibility scales only the interference term and
//! dark counts add `ν·τ`.

use std::f64::consts::TAU;

use rand::Rng;

use crate::distribution::{node_phase, wrap_pi, wrap_tau};
use crate::error::{invalid, Error, Result};

/// A single-mode coherent field `|A e^{iθ}⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentField {
    pub amplitude: f64,
    pub phase: f64,
}

impl CoherentField {
    pub fn new(amplitude: f64, phase: f64) -> Result<Self> {
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(invalid(format!("amplitude must be >= 0, got {amplitude}")));
        }
        Ok(Self {
            amplitude,
            phase: wrap_tau(phase),
        })
    }

    pub fn mean_photons(&self) -> f64 {
        self.amplitude * self.amplitude
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    /// Photon-number resolution `m`: outcomes `0..m-1` plus an `m or more` bin.
    pub pnr: u32,
    pub efficiency: f64,
    pub visibility: f64,
    /// Dark count rate in counts per second.
    pub dark_rate: f64,
    /// Duration of one adaptive step in seconds.
    pub step_duration: f64,
}

impl DetectorModel {
    pub const DEFAULT_STEP_DURATION: f64 = 20e-6;

    pub fn ideal(pnr: u32) -> Self {
        Self {
            pnr,
            efficiency: 1.0,
            visibility: 1.0,
            dark_rate: 0.0,
            step_duration: Self::DEFAULT_STEP_DURATION,
        }
    }

    /// The imperfections of the reference experiment: η = 0.70, ξ = 0.997,
    /// ν = 140/s with 20 µs steps.
    pub fn experimental(pnr: u32) -> Self {
        Self {
            pnr,
            efficiency: 0.70,
            visibility: 0.997,
            dark_rate: 140.0,
            step_duration: Self::DEFAULT_STEP_DURATION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pnr < 1 {
            return Err(invalid("pnr must be at least 1"));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(invalid(format!(
                "efficiency must lie in (0, 1], got {}",
                self.efficiency
            )));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(invalid(format!(
                "visibility must lie in [0, 1], got {}",
                self.visibility
            )));
        }
        if !(self.dark_rate >= 0.0) || !self.dark_rate.is_finite() {
            return Err(invalid(format!("dark_rate must be >= 0, got {}", self.dark_rate)));
        }
        if !(self.step_duration > 0.0) || !self.step_duration.is_finite() {
            return Err(invalid(format!(
                "step_duration must be > 0, got {}",
                self.step_duration
            )));
        }
        Ok(())
    }

    /// Mean dark counts per step, `ν·τ`.
    pub fn dark_mean(&self) -> f64 {
        self.dark_rate * self.step_duration
    }

    pub fn outcomes(&self) -> usize {
        self.pnr as usize + 1
    }
}

/// LO amplitude and phase offset relative to the current estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementSetting {
    pub amplitude: f64,
    /// Offset in `(-π, π]`; the LO phase is `estimate + offset`.
    pub offset: f64,
}

impl DisplacementSetting {
    pub fn new(amplitude: f64, offset: f64) -> Self {
        Self {
            amplitude,
            offset: wrap_pi(offset),
        }
    }

    pub fn lo_phase(&self, estimate: f64) -> f64 {
        wrap_tau(estimate + self.offset)
    }
}

/// Mean detected photon number `η(|α|² + |β|² − 2ξ|α||β|cos Δ) + ν·τ`.
#[inline]
pub fn mean_count(delta: f64, alpha_amp: f64, beta_amp: f64, det: &DetectorModel) -> f64 {
    let intensity = alpha_amp * alpha_amp + beta_amp * beta_amp
        - 2.0 * det.visibility * alpha_amp * beta_amp * delta.cos();
    (det.efficiency * intensity).max(0.0) + det.dark_mean()
}

/// Fills `out[0..=m]` with the PNR(m) outcome distribution for mean count
/// `lambda`: Poisson probabilities for `n < m` and the tail mass for `n = m`.
pub fn outcome_pmf_into(lambda: f64, pnr: u32, out: &mut [f64]) {
    let m = pnr as usize;
    debug_assert_eq!(out.len(), m + 1);
    let mut p = (-lambda).exp();
    let mut head = 0.0;
    for (n, slot) in out.iter_mut().take(m).enumerate() {
        *slot = p;
        head += p;
        p *= lambda / (n + 1) as f64;
    }
    // `p` is now the Poisson mass at n = m.
    out[m] = if lambda < m as f64 {
        poisson_tail(p, lambda, m)
    } else {
        (1.0 - head).max(0.0)
    };
}

/// Σ_{n ≥ m} Poisson(n; λ), given the mass `p_m` at `n = m`. Used below the
/// mode where `1 − head` would cancel catastrophically.
fn poisson_tail(p_m: f64, lambda: f64, m: usize) -> f64 {
    let mut term = p_m;
    let mut sum = 0.0;
    let mut n = m;
    while term > sum * 1e-18 && term > 0.0 {
        sum += term;
        n += 1;
        term *= lambda / n as f64;
    }
    sum
}

pub fn outcome_pmf(lambda: f64, pnr: u32) -> Vec<f64> {
    let mut out = vec![0.0; pnr as usize + 1];
    outcome_pmf_into(lambda, pnr, &mut out);
    out
}

/// Probability of outcome `n` at a single relative phase.
pub fn likelihood(
    n: u32,
    delta: f64,
    alpha_amp: f64,
    beta_amp: f64,
    det: &DetectorModel,
) -> Result<f64> {
    check_outcome(n, det)?;
    let lambda = mean_count(delta, alpha_amp, beta_amp, det);
    Ok(outcome_probability(n, lambda, det.pnr))
}

pub(crate) fn outcome_probability(n: u32, lambda: f64, pnr: u32) -> f64 {
    if n < pnr {
        let mut p = (-lambda).exp();
        for k in 0..n {
            p *= lambda / (k + 1) as f64;
        }
        p
    } else {
        outcome_pmf(lambda, pnr)[pnr as usize]
    }
}

/// Likelihood of outcome `n` at every grid node for LO phase `theta_lo`.
///
/// When `θ_LO` sits on the grid or halfway between two nodes, the row is
/// symmetric about it and only half of it is evaluated.
pub fn likelihood_row(
    n: u32,
    theta_lo: f64,
    alpha_amp: f64,
    beta_amp: f64,
    det: &DetectorModel,
    grid_size: usize,
) -> Result<Vec<f64>> {
    check_outcome(n, det)?;
    let k = grid_size;
    let eval = |j: usize| {
        let delta = wrap_pi(node_phase(j, k) - theta_lo);
        outcome_probability(n, mean_count(delta, alpha_amp, beta_amp, det), det.pnr)
    };

    // 2·θ_LO in units of node spacing
    let twice = 2.0 * wrap_tau(theta_lo) * k as f64 / TAU;
    let rounded = twice.round();
    if (twice - rounded).abs() > 1e-9 {
        return Ok((0..k).map(eval).collect());
    }
    // Mirror pairs satisfy j + j' ≡ 2θ_LO (mod K).
    let s = (rounded as usize) % (2 * k);
    let mut row = vec![f64::NAN; k];
    for j in 0..k {
        if row[j].is_nan() {
            let v = eval(j);
            row[j] = v;
            row[(s + 2 * k - j) % k] = v;
        }
    }
    Ok(row)
}

/// Draws a PNR(m) outcome at relative phase `delta` by inversion of the
/// clamped outcome distribution. Consumes exactly one uniform variate.
pub fn sample_outcome<R: Rng + ?Sized>(
    rng: &mut R,
    delta: f64,
    alpha_amp: f64,
    beta_amp: f64,
    det: &DetectorModel,
) -> u32 {
    let lambda = mean_count(delta, alpha_amp, beta_amp, det);
    sample_from_mean(rng, lambda, det.pnr)
}

pub fn sample_from_mean<R: Rng + ?Sized>(rng: &mut R, lambda: f64, pnr: u32) -> u32 {
    let u: f64 = rng.random();
    let mut p = (-lambda).exp();
    let mut cdf = 0.0;
    for n in 0..pnr {
        cdf += p;
        if u < cdf {
            return n;
        }
        p *= lambda / (n + 1) as f64;
    }
    pnr
}

/// Classical Fisher information of ideal displaced photon counting with
/// unlimited number resolution.
pub fn cfi(delta: f64, alpha_amp: f64, beta_amp: f64) -> f64 {
    let (a, b) = (alpha_amp, beta_amp);
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let denom = (a - b).powi(2) + 4.0 * a * b * (0.5 * delta).sin().powi(2);
    if (1.0 - b / a).abs() < 1e-9 && wrap_pi(delta).abs() < 1e-9 {
        // removable singularity: sin²Δ / (2 − 2cos Δ) → 1
        return 4.0 * a * a;
    }
    4.0 * a * a * b * b * delta.sin().powi(2) / denom
}

/// LO amplitude `|α|/|cos Δ|` at which the Fisher information reaches `4|α|²`.
pub fn beta_fi(delta: f64, alpha_amp: f64) -> Result<f64> {
    let c = delta.cos().abs();
    if c <= 1e-9 {
        return Err(Error::DivergentAmplitude { delta });
    }
    Ok(alpha_amp / c)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    /// Cramér–Rao bound `1/(4η|α|²)`.
    pub crlb: f64,
    /// Heterodyne limit `1/(2η|α|²)`.
    pub heterodyne: f64,
}

pub fn bounds(alpha_sq: f64, eta: f64) -> Result<Bounds> {
    if !(alpha_sq > 0.0) || !alpha_sq.is_finite() {
        return Err(invalid(format!("alpha_sq must be > 0, got {alpha_sq}")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(invalid(format!("efficiency must lie in (0, 1], got {eta}")));
    }
    Ok(Bounds {
        crlb: 1.0 / (4.0 * eta * alpha_sq),
        heterodyne: 1.0 / (2.0 * eta * alpha_sq),
    })
}

fn check_outcome(n: u32, det: &DetectorModel) -> Result<()> {
    if n > det.pnr {
        return Err(invalid(format!("outcome {n} exceeds PNR({})", det.pnr)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn mean_count_examples() {
        let ideal = DetectorModel::ideal(3);
        assert_eq!(mean_count(0.0, 1.0, 1.0, &ideal), 0.0);
        assert!(close(mean_count(PI, 1.0, 1.0, &ideal), 4.0, 1e-15));
        let exp = DetectorModel::experimental(3);
        // 0.7·(2 − 1.994) + 140·20e-6
        let expected = 0.7 * (2.0 - 2.0 * 0.997) + 0.0028;
        assert!(close(mean_count(0.0, 1.0, 1.0, &exp), expected, 1e-15));
        assert!(close(expected, 0.0070, 1e-12));
    }

    #[test]
    fn likelihood_examples() {
        let ideal = DetectorModel::ideal(3);
        assert_eq!(likelihood(0, 0.0, 1.0, 1.0, &ideal).unwrap(), 1.0);
        assert!(close(
            likelihood(0, PI, 1.0, 1.0, &ideal).unwrap(),
            (-4.0f64).exp(),
            1e-15
        ));
        assert!(close((-4.0f64).exp(), 0.018316, 1e-6));
        assert!(matches!(
            likelihood(4, 0.0, 1.0, 1.0, &ideal),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn tail_bin_is_accurate_for_tiny_mean() {
        // Σ_{n≥3} Poisson(n; 1e-4) ≈ λ³/6
        let pmf = outcome_pmf(1e-4, 3);
        let expected = 1e-12 / 6.0 * (1.0 - 1e-4 * 3.0 / 4.0);
        assert!((pmf[3] - expected).abs() / expected < 1e-6, "{}", pmf[3]);
    }

    #[test]
    fn likelihood_row_matches_scalar_calls() {
        let det = DetectorModel::ideal(3);
        let row = likelihood_row(0, 0.0, 1.0, 1.0, &det, 8).unwrap();
        for (j, v) in row.iter().enumerate() {
            let delta = TAU * j as f64 / 8.0;
            let scalar = likelihood(0, delta, 1.0, 1.0, &det).unwrap();
            assert!(close(*v, scalar, 1e-15), "node {j}: {v} vs {scalar}");
        }
    }

    #[test]
    fn likelihood_row_symmetry_and_periodicity() {
        let det = DetectorModel::experimental(3);
        let k = 64;
        let h = TAU / k as f64;
        for n in 0..=3 {
            // θ on a node and halfway between nodes
            for theta in [5.0 * h, 5.5 * h] {
                let row = likelihood_row(n, theta, 1.3, 1.1, &det, k).unwrap();
                let full: Vec<f64> = (0..k)
                    .map(|j| {
                        likelihood(n, node_phase(j, k) - theta, 1.3, 1.1, &det).unwrap()
                    })
                    .collect();
                for j in 0..k {
                    assert!(close(row[j], full[j], 1e-15));
                }
                for x in 1..k / 2 {
                    let up = ((theta / h) + x as f64).round() as usize % k;
                    let down = ((theta / h) - x as f64 + k as f64).round() as usize % k;
                    if theta == 5.0 * h {
                        assert_eq!(row[up], row[down]);
                    }
                }
            }
            let base = likelihood_row(n, 0.3, 1.3, 1.1, &det, k).unwrap();
            let shifted = likelihood_row(n, 0.3 + 3.0 * h, 1.3, 1.1, &det, k).unwrap();
            for j in 0..k {
                assert!(close(shifted[(j + 3) % k], base[j], 1e-14));
            }
        }
    }

    #[test]
    fn sampler_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let det = DetectorModel::ideal(3);
        for _ in 0..1000 {
            assert_eq!(sample_outcome(&mut rng, 0.0, 1.0, 1.0, &det), 0);
            assert_eq!(sample_from_mean(&mut rng, 1e4, 3), 3);
        }
    }

    #[test]
    fn sampler_matches_pmf() {
        // λ = 4 at Δ = π with |α| = |β| = 1
        let det = DetectorModel::ideal(3);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 1_000_000;
        let mut counts = [0u64; 4];
        for _ in 0..draws {
            counts[sample_outcome(&mut rng, PI, 1.0, 1.0, &det) as usize] += 1;
        }
        let pmf = outcome_pmf(4.0, 3);
        let mut chi2 = 0.0;
        for n in 0..4 {
            let p = pmf[n];
            let freq = counts[n] as f64 / draws as f64;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((freq - p).abs() < 4.0 * se, "n={n}: {freq} vs {p}");
            let e = p * draws as f64;
            chi2 += (counts[n] as f64 - e).powi(2) / e;
        }
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let p_value = 1.0 - ChiSquared::new(3.0).unwrap().cdf(chi2);
        assert!(p_value > 0.001, "chi2 = {chi2}, p = {p_value}");
    }

    #[test]
    fn cfi_examples() {
        assert_eq!(cfi(0.0, 1.0, 1.0), 4.0);
        assert!(close(cfi(PI / 2.0, 1.0, 1.0), 2.0, 1e-15));
        assert_eq!(cfi(0.3, 1.0, 0.0), 0.0);
    }

    #[test]
    fn beta_fi_examples() {
        assert_eq!(beta_fi(0.0, 1.7).unwrap(), 1.7);
        assert!(close(beta_fi(PI / 3.0, 1.0).unwrap(), 2.0, 1e-12));
        assert!(matches!(
            beta_fi(PI / 2.0, 1.0),
            Err(Error::DivergentAmplitude { .. })
        ));
    }

    #[test]
    fn bounds_examples() {
        let b = bounds(50.0, 1.0).unwrap();
        assert!(close(b.crlb, 0.005, 1e-15) && close(b.heterodyne, 0.01, 1e-15));
        let b = bounds(50.0, 0.7).unwrap();
        assert!(close(b.crlb, 1.0 / 140.0, 1e-15) && close(b.heterodyne, 1.0 / 70.0, 1e-15));
        assert!(bounds(0.0, 1.0).is_err());
        assert!(bounds(10.0, 1.5).is_err());
    }

    #[test]
    fn detector_validation() {
        assert!(DetectorModel::ideal(3).validate().is_ok());
        assert!(DetectorModel::experimental(3).validate().is_ok());
        assert!(DetectorModel::ideal(0).validate().is_err());
        let mut d = DetectorModel::ideal(3);
        d.efficiency = 1.5;
        assert!(d.validate().is_err());
    }

    /// Σ_n L(n)(∂_φ ln L(n))² with central differences, summing to n = 200.
    fn finite_difference_fisher(delta: f64, a: f64, b: f64) -> f64 {
        let h = 1e-5;
        let lam = |d: f64| a * a + b * b - 2.0 * a * b * d.cos();
        let log_pmf = |n: usize, l: f64| -> f64 {
            n as f64 * l.ln() - l - (1..=n).map(|k| (k as f64).ln()).sum::<f64>()
        };
        let (l0, lp, lm) = (lam(delta), lam(delta + h), lam(delta - h));
        (0..=200)
            .map(|n| {
                let d = (log_pmf(n, lp) - log_pmf(n, lm)) / (2.0 * h);
                log_pmf(n, l0).exp() * d * d
            })
            .sum()
    }

    proptest! {
        #[test]
        fn pmf_is_complete(delta in -PI..PI, a in 0.0f64..6.0, b in 0.0f64..8.0, m in 1u32..13) {
            let det = DetectorModel { pnr: m, ..DetectorModel::experimental(m) };
            let s: f64 = (0..=m).map(|n| likelihood(n, delta, a, b, &det).unwrap()).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn qfi_saturates_at_beta_fi(delta in -1.2f64..1.2, a in 0.1f64..40.0) {
            let f = cfi(delta, a, beta_fi(delta, a).unwrap());
            prop_assert!((f - 4.0 * a * a).abs() <= 1e-10 * (4.0 * a * a).max(1.0));
        }

        #[test]
        fn cfi_matches_finite_differences(delta in 0.2f64..3.0, a in 0.5f64..3.0, b in 0.5f64..3.0) {
            let fd = finite_difference_fisher(delta, a, b);
            let cf = cfi(delta, a, b);
            prop_assert!((fd - cf).abs() / cf < 1e-6, "{} vs {}", fd, cf);
        }

        #[test]
        fn mean_count_extremes(delta in -PI..PI, a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let det = DetectorModel::experimental(3);
            let l = mean_count(delta, a, b, &det);
            prop_assert!(mean_count(0.0, a, b, &det) <= l + 1e-12);
            prop_assert!(mean_count(PI, a, b, &det) >= l - 1e-12);
        }
    }
}
