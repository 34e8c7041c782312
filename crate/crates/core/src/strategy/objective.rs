//! Objective functions evaluated directly from a prior and one LO setting.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::distribution::{node_phase, wrap_pi, PhaseDistribution};
use crate::error::{invalid, Error};
use crate::optics::{mean_count, outcome_pmf_into, DetectorModel, DisplacementSetting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    /// Expected sharpness of the posterior.
    Sharpness,
    /// Expected information gain of the next outcome, in bits.
    MutualInformation,
    /// Fixed `|β| = |α|` with the LO on the current estimate.
    NonOptimized,
}

impl Objective {
    pub const ALL: [Objective; 3] = [
        Objective::Sharpness,
        Objective::MutualInformation,
        Objective::NonOptimized,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Objective::Sharpness => "sharpness",
            Objective::MutualInformation => "mutual_information",
            Objective::NonOptimized => "non_optimized",
        }
    }

    pub fn is_optimized(&self) -> bool {
        !matches!(self, Objective::NonOptimized)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sharpness" => Ok(Objective::Sharpness),
            "mutual_information" | "mi" => Ok(Objective::MutualInformation),
            "non_optimized" | "baseline" => Ok(Objective::NonOptimized),
            other => Err(invalid(format!(
                "unknown objective '{other}' (expected sharpness, mutual_information or non_optimized)"
            ))),
        }
    }
}

/// Per-node outcome probabilities `L(n|φ_j)` for a setting whose offset is
/// taken relative to the prior's argmax. Indexed `[j][n]`.
fn likelihood_matrix(
    prior: &PhaseDistribution,
    setting: &DisplacementSetting,
    det: &DetectorModel,
    alpha_amp: f64,
) -> Vec<Vec<f64>> {
    let k = prior.grid_size();
    let theta = setting.lo_phase(prior.argmax_phase());
    (0..k)
        .map(|j| {
            let delta = wrap_pi(node_phase(j, k) - theta);
            let mut pmf = vec![0.0; det.outcomes()];
            outcome_pmf_into(
                mean_count(delta, alpha_amp, setting.amplitude, det),
                det.pnr,
                &mut pmf,
            );
            pmf
        })
        .collect()
}

/// `Σ_n |Σ_j e^{iφ_j} L(n|φ_j) P_j|`. Each outcome's joint sum carries the
/// weight `P(n)` already, so no per-outcome normalization is needed.
pub fn expected_sharpness(
    prior: &PhaseDistribution,
    setting: &DisplacementSetting,
    det: &DetectorModel,
    alpha_amp: f64,
) -> f64 {
    let like = likelihood_matrix(prior, setting, det, alpha_amp);
    let k = prior.grid_size();
    (0..det.outcomes())
        .map(|n| {
            prior
                .values()
                .iter()
                .zip(&like)
                .enumerate()
                .map(|(j, (p, l))| Complex64::from_polar(p * l[n], node_phase(j, k)))
                .sum::<Complex64>()
                .norm()
        })
        .sum()
}

/// Mutual information between the next outcome and the phase, in bits.
pub fn mutual_information(
    prior: &PhaseDistribution,
    setting: &DisplacementSetting,
    det: &DetectorModel,
    alpha_amp: f64,
) -> f64 {
    let like = likelihood_matrix(prior, setting, det, alpha_amp);
    let mut info = 0.0;
    for n in 0..det.outcomes() {
        let p_n: f64 = prior.values().iter().zip(&like).map(|(p, l)| p * l[n]).sum();
        if p_n <= 0.0 {
            continue;
        }
        for (p, l) in prior.values().iter().zip(&like) {
            let joint = p * l[n];
            if joint > 0.0 {
                info += joint * (l[n] / p_n).log2();
            }
        }
    }
    info.max(0.0)
}

pub fn evaluate(
    objective: Objective,
    prior: &PhaseDistribution,
    setting: &DisplacementSetting,
    det: &DetectorModel,
    alpha_amp: f64,
) -> Option<f64> {
    match objective {
        Objective::Sharpness => Some(expected_sharpness(prior, setting, det, alpha_amp)),
        Objective::MutualInformation => Some(mutual_information(prior, setting, det, alpha_amp)),
        Objective::NonOptimized => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::likelihood;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Oracle: form every posterior explicitly, normalize it, take its
    /// sharpness and weight by P(n).
    fn sharpness_oracle(
        prior: &PhaseDistribution,
        setting: &DisplacementSetting,
        det: &DetectorModel,
        a: f64,
    ) -> f64 {
        let theta = prior.argmax_phase() + setting.offset;
        let mut total = 0.0;
        for n in 0..=det.pnr {
            let row: Vec<f64> = (0..prior.grid_size())
                .map(|j| likelihood(n, prior.phase(j) - theta, a, setting.amplitude, det).unwrap())
                .collect();
            let p_n: f64 = prior.values().iter().zip(&row).map(|(p, l)| p * l).sum();
            if p_n == 0.0 {
                continue;
            }
            let post = prior.bayes_update(&row).unwrap();
            total += p_n * post.first_moment().norm();
        }
        total
    }

    /// Oracle: MI as H(N) − H(N|Φ) from explicit entropies.
    fn mi_oracle(
        prior: &PhaseDistribution,
        setting: &DisplacementSetting,
        det: &DetectorModel,
        a: f64,
    ) -> f64 {
        let theta = prior.argmax_phase() + setting.offset;
        let mut h_n = 0.0;
        let mut h_n_given_phi = 0.0;
        for n in 0..=det.pnr {
            let row: Vec<f64> = (0..prior.grid_size())
                .map(|j| likelihood(n, prior.phase(j) - theta, a, setting.amplitude, det).unwrap())
                .collect();
            let p_n: f64 = prior.values().iter().zip(&row).map(|(p, l)| p * l).sum();
            if p_n > 0.0 {
                h_n -= p_n * p_n.log2();
            }
            for (p, l) in prior.values().iter().zip(&row) {
                if *l > 0.0 {
                    h_n_given_phi -= p * l * l.log2();
                }
            }
        }
        h_n - h_n_given_phi
    }

    fn random_instance(rng: &mut ChaCha8Rng, k: usize) -> (PhaseDistribution, DisplacementSetting, DetectorModel, f64) {
        let weights: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powi(3)).collect();
        let prior = PhaseDistribution::from_weights(weights).unwrap();
        let pnr = rng.random_range(1..=4);
        let det = if rng.random::<bool>() {
            DetectorModel::ideal(pnr)
        } else {
            DetectorModel::experimental(pnr)
        };
        let a = rng.random_range(0.2..3.0);
        let setting = DisplacementSetting::new(rng.random_range(0.0..3.0 * a), rng.random_range(-1.5..1.5));
        (prior, setting, det, a)
    }

    #[test]
    fn objectives_match_explicit_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let (prior, setting, det, a) = random_instance(&mut rng, 64);
            let s = expected_sharpness(&prior, &setting, &det, a);
            let so = sharpness_oracle(&prior, &setting, &det, a);
            assert!((s - so).abs() < 1e-10, "{s} vs {so}");
            let mi = mutual_information(&prior, &setting, &det, a);
            let mo = mi_oracle(&prior, &setting, &det, a);
            assert!((mi - mo).abs() < 1e-10, "{mi} vs {mo}");
            assert!(mi >= -1e-12 && mi <= ((det.pnr + 1) as f64).log2() + 1e-12);
            assert!((0.0..=1.0 + 1e-12).contains(&s));
        }
    }

    #[test]
    fn zero_amplitude_gives_prior_sharpness() {
        let det = DetectorModel::ideal(3);
        let flat = PhaseDistribution::uniform(64).unwrap();
        let s = expected_sharpness(&flat, &DisplacementSetting::new(0.0, 0.3), &det, 1.0);
        assert!(s.abs() < 1e-12);

        let point = PhaseDistribution::point_mass(64, 9).unwrap();
        for (b, d) in [(0.0, 0.0), (1.0, 0.5), (2.5, -1.0)] {
            let s = expected_sharpness(&point, &DisplacementSetting::new(b, d), &det, 1.0);
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn phase_independent_likelihood_carries_no_information() {
        let det = DetectorModel::ideal(3);
        let prior = PhaseDistribution::wrapped_gaussian(64, 1.0, 0.4).unwrap();
        let mi = mutual_information(&prior, &DisplacementSetting::new(1.2, 0.3), &det, 0.0);
        assert!(mi.abs() < 1e-12);
    }

    #[test]
    fn mutual_information_converges_with_grid() {
        // A K=256 evaluation against a dense K=2048 double sum of the same
        // continuous prior; the periodic Riemann sum converges geometrically
        // as long as λ stays away from 0, where L ln L is not smooth.
        let det = DetectorModel::ideal(3);
        let a = 10f64.sqrt();
        for (b, d) in [(1.2 * a, 0.0), (1.3 * a, 0.4), (0.7 * a, -0.9)] {
            let setting = DisplacementSetting::new(b, d);
            let coarse = PhaseDistribution::wrapped_gaussian(256, 0.0, 0.3).unwrap();
            let dense = PhaseDistribution::wrapped_gaussian(2048, 0.0, 0.3).unwrap();
            let mc = mutual_information(&coarse, &setting, &det, a);
            let md = mi_oracle(&dense, &setting, &det, a);
            assert!((mc - md).abs() / md < 1e-6, "{mc} vs {md}");
        }
    }

    #[test]
    fn wrapped_gaussian_sharpness_matches_oracle() {
        let det = DetectorModel::ideal(3);
        let a = 10f64.sqrt();
        let prior = PhaseDistribution::wrapped_gaussian(256, 0.0, 0.3).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let setting = DisplacementSetting::new(3.0 * a * i as f64 / 7.0, -1.5 + 3.0 * j as f64 / 7.0);
                let s = expected_sharpness(&prior, &setting, &det, a);
                let so = sharpness_oracle(&prior, &setting, &det, a);
                assert!((s - so).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn objective_names_round_trip() {
        for o in Objective::ALL {
            assert_eq!(o.name().parse::<Objective>().unwrap(), o);
        }
        assert!("entropy".parse::<Objective>().is_err());
    }
}
