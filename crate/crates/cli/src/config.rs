//! Flat `key = value` run configuration. Command-line `--key value` flags
//! override file values.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pelt_core::harness::SimulationConfig;
use pelt_core::{DetectorModel, Objective};

use crate::CliError;

/// Canonical keys, in the order they are echoed to output headers.
pub const KEYS: &[&str] = &[
    "preset",
    "alpha_sq",
    "objective",
    "L",
    "pnr",
    "eta",
    "visibility",
    "dark_rate",
    "step_duration",
    "grid_size",
    "k_switch",
    "beta_points",
    "beta_max_ratio",
    "delta_points",
    "sigma_points",
    "log10_sigma_min",
    "log10_sigma_max",
    "fixed_point",
    "trials",
    "seed",
    "workers",
    "alpha_sq_list",
    "objectives",
    "bins",
    "runs",
    "inject",
    "lut_dir",
];

fn canonical(key: &str) -> Option<&'static str> {
    match key {
        "steps" => Some("L"),
        "master_seed" => Some("seed"),
        k => KEYS.iter().copied().find(|c| *c == k),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Ideal,
    Experimental,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Ideal => "ideal",
            Preset::Experimental => "experimental",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub sim: SimulationConfig,
    pub trials: usize,
    pub seed: u64,
    /// Signal strengths for `sweep`, `lut-build` and `lut-dump`.
    pub alpha_sq_list: Vec<f64>,
    /// Objectives for `sweep`, `lut-build` and `lut-dump`.
    pub objectives: Vec<Objective>,
    pub bins: usize,
    /// Repeated independent ensembles for `run`; 0 or 1 means a single one.
    pub runs: usize,
    /// Amplitude of the `sin θ₀` error injected by `bias` (negative control).
    pub inject: f64,
    pub lut_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sim = SimulationConfig::default();
        Self {
            preset: Preset::Ideal,
            alpha_sq_list: vec![sim.alpha_sq],
            objectives: vec![sim.objective],
            sim,
            trials: 1000,
            seed: 1,
            bins: 32,
            runs: 0,
            inject: 0.0,
            lut_dir: None,
        }
    }
}

impl RunConfig {
    /// Every key with its effective value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.sim;
        let d = &s.detector;
        let list = |v: Vec<String>| v.join(",");
        vec![
            ("preset", self.preset.to_string()),
            ("alpha_sq", s.alpha_sq.to_string()),
            ("objective", s.objective.to_string()),
            ("L", s.steps.to_string()),
            ("pnr", d.pnr.to_string()),
            ("eta", d.efficiency.to_string()),
            ("visibility", d.visibility.to_string()),
            ("dark_rate", d.dark_rate.to_string()),
            ("step_duration", d.step_duration.to_string()),
            ("grid_size", s.grid_size.to_string()),
            ("k_switch", s.k_switch.to_string()),
            ("beta_points", s.beta_points.to_string()),
            ("beta_max_ratio", s.beta_max_ratio.to_string()),
            ("delta_points", s.delta_points.to_string()),
            ("sigma_points", s.sigma_points.to_string()),
            ("log10_sigma_min", s.log10_sigma_min.to_string()),
            ("log10_sigma_max", s.log10_sigma_max.to_string()),
            ("fixed_point", s.fixed_point.to_string()),
            ("trials", self.trials.to_string()),
            ("seed", self.seed.to_string()),
            ("workers", s.workers.to_string()),
            ("alpha_sq_list", list(self.alpha_sq_list.iter().map(|a| a.to_string()).collect())),
            ("objectives", list(self.objectives.iter().map(|o| o.to_string()).collect())),
            ("bins", self.bins.to_string()),
            ("runs", self.runs.to_string()),
            ("inject", self.inject.to_string()),
            (
                "lut_dir",
                self.lut_dir
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
        ]
    }
}

/// Reads `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_file_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("line {}: expected key = value, got '{}'", i + 1, raw.trim()))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// File values first, then `overrides` on top.
pub fn parse_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
    let mut pairs = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            parse_file_text(&text)?
        }
        None => Vec::new(),
    };
    pairs.extend(overrides.iter().cloned());
    build_config(&pairs)
}

pub fn build_config(pairs: &[(String, String)]) -> Result<RunConfig, CliError> {
    let mut map: BTreeMap<&'static str, &str> = BTreeMap::new();
    for (k, v) in pairs {
        let key = canonical(k).ok_or_else(|| CliError::Config(format!("unknown config key '{k}'")))?;
        map.insert(key, v.as_str());
    }

    let mut cfg = RunConfig::default();
    if let Some(v) = map.get("preset") {
        cfg.preset = match *v {
            "ideal" => Preset::Ideal,
            "experimental" => Preset::Experimental,
            other => {
                return Err(CliError::Config(format!(
                    "preset must be ideal or experimental, got '{other}'"
                )))
            }
        };
    }
    let pnr: u32 = get(&map, "pnr")?.unwrap_or(3);
    cfg.sim.detector = match cfg.preset {
        Preset::Ideal => DetectorModel::ideal(pnr),
        Preset::Experimental => DetectorModel::experimental(pnr),
    };
    let s = &mut cfg.sim;
    set(&map, "alpha_sq", &mut s.alpha_sq)?;
    set(&map, "objective", &mut s.objective)?;
    set(&map, "L", &mut s.steps)?;
    set(&map, "eta", &mut s.detector.efficiency)?;
    set(&map, "visibility", &mut s.detector.visibility)?;
    set(&map, "dark_rate", &mut s.detector.dark_rate)?;
    set(&map, "step_duration", &mut s.detector.step_duration)?;
    set(&map, "grid_size", &mut s.grid_size)?;
    set(&map, "k_switch", &mut s.k_switch)?;
    set(&map, "beta_points", &mut s.beta_points)?;
    set(&map, "beta_max_ratio", &mut s.beta_max_ratio)?;
    set(&map, "delta_points", &mut s.delta_points)?;
    set(&map, "sigma_points", &mut s.sigma_points)?;
    set(&map, "log10_sigma_min", &mut s.log10_sigma_min)?;
    set(&map, "log10_sigma_max", &mut s.log10_sigma_max)?;
    set(&map, "fixed_point", &mut s.fixed_point)?;
    set(&map, "workers", &mut s.workers)?;
    set(&map, "trials", &mut cfg.trials)?;
    set(&map, "seed", &mut cfg.seed)?;
    set(&map, "bins", &mut cfg.bins)?;
    set(&map, "runs", &mut cfg.runs)?;
    set(&map, "inject", &mut cfg.inject)?;
    cfg.alpha_sq_list = match map.get("alpha_sq_list") {
        Some(v) => list(v, "alpha_sq_list")?,
        None => vec![cfg.sim.alpha_sq],
    };
    cfg.objectives = match map.get("objectives") {
        Some(v) => list(v, "objectives")?,
        None => vec![cfg.sim.objective],
    };
    if let Some(v) = map.get("lut_dir") {
        cfg.lut_dir = (!v.is_empty()).then(|| PathBuf::from(v));
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn get<T: FromStr>(map: &BTreeMap<&'static str, &str>, key: &str) -> Result<Option<T>, CliError>
where
    T::Err: fmt::Display,
{
    map.get(key)
        .map(|v| {
            v.parse::<T>()
                .map_err(|e| CliError::Config(format!("{key}: cannot parse '{v}': {e}")))
        })
        .transpose()
}

fn set<T: FromStr>(map: &BTreeMap<&'static str, &str>, key: &str, slot: &mut T) -> Result<(), CliError>
where
    T::Err: fmt::Display,
{
    if let Some(v) = get(map, key)? {
        *slot = v;
    }
    Ok(())
}

fn list<T: FromStr>(v: &str, key: &str) -> Result<Vec<T>, CliError>
where
    T::Err: fmt::Display,
{
    let items = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|e| CliError::Config(format!("{key}: cannot parse '{s}': {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if items.is_empty() {
        return Err(CliError::Config(format!("{key} must list at least one value")));
    }
    Ok(items)
}

fn range_err(key: &str, bound: &str, got: impl fmt::Display) -> CliError {
    CliError::Config(format!("{key} out of range: must be {bound}, got {got}"))
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.sim;
    let d = &s.detector;
    if !(s.alpha_sq >= 0.0) || !s.alpha_sq.is_finite() {
        return Err(range_err("alpha_sq", ">= 0", s.alpha_sq));
    }
    if let Some(a) = cfg.alpha_sq_list.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(range_err("alpha_sq_list", "> 0 for every entry", a));
    }
    if s.steps < 1 {
        return Err(range_err("L", ">= 1", s.steps));
    }
    if d.pnr < 1 {
        return Err(range_err("pnr", ">= 1", d.pnr));
    }
    if !(d.efficiency > 0.0 && d.efficiency <= 1.0) {
        return Err(range_err("eta", "in (0, 1]", d.efficiency));
    }
    if !(0.0..=1.0).contains(&d.visibility) {
        return Err(range_err("visibility", "in [0, 1]", d.visibility));
    }
    if !(d.dark_rate >= 0.0) || !d.dark_rate.is_finite() {
        return Err(range_err("dark_rate", ">= 0", d.dark_rate));
    }
    if !(d.step_duration > 0.0) || !d.step_duration.is_finite() {
        return Err(range_err("step_duration", "> 0", d.step_duration));
    }
    if s.grid_size < pelt_core::distribution::MIN_GRID_SIZE {
        return Err(range_err("grid_size", ">= 8", s.grid_size));
    }
    if s.fixed_point && s.grid_size != pelt_core::fixed_point::FP_GRID {
        return Err(range_err("grid_size", "256 when fixed_point = true", s.grid_size));
    }
    if s.k_switch < 1 {
        return Err(range_err("k_switch", ">= 1", s.k_switch));
    }
    if s.beta_points < 1 {
        return Err(range_err("beta_points", ">= 1", s.beta_points));
    }
    if !(s.beta_max_ratio > 0.0) || !s.beta_max_ratio.is_finite() {
        return Err(range_err("beta_max_ratio", "> 0", s.beta_max_ratio));
    }
    if s.delta_points < 1 {
        return Err(range_err("delta_points", ">= 1", s.delta_points));
    }
    if s.sigma_points < 1 {
        return Err(range_err("sigma_points", ">= 1", s.sigma_points));
    }
    if !(s.log10_sigma_min < s.log10_sigma_max) {
        return Err(range_err("log10_sigma_min", "< log10_sigma_max", s.log10_sigma_min));
    }
    if cfg.trials < 2 {
        return Err(range_err("trials", ">= 2", cfg.trials));
    }
    if cfg.bins < 1 {
        return Err(range_err("bins", ">= 1", cfg.bins));
    }
    if !cfg.inject.is_finite() {
        return Err(range_err("inject", "finite", cfg.inject));
    }
    s.validate().map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = build_config(&parse_file_text("# nothing here\n\n").unwrap()).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.sim.steps, 30);
        assert_eq!(cfg.sim.detector, DetectorModel::ideal(3));
        assert_eq!(cfg.sim.grid_size, 256);
        assert_eq!(cfg.sim.k_switch, 9);
        assert_eq!(cfg.sim.detector.step_duration, 20e-6);
    }

    #[test]
    fn flags_override_file() {
        let mut p = parse_file_text("L = 10\nalpha_sq = 50 # strong\n").unwrap();
        p.extend(pairs(&[("L", "30")]));
        let cfg = build_config(&p).unwrap();
        assert_eq!(cfg.sim.steps, 30);
        assert_eq!(cfg.sim.alpha_sq, 50.0);
        assert_eq!(cfg.alpha_sq_list, vec![50.0]);
    }

    #[test]
    fn out_of_range_names_the_bound() {
        let err = build_config(&pairs(&[("eta", "1.5")])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("eta") && msg.contains("(0, 1]"), "{msg}");
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn unknown_key_is_named() {
        let msg = build_config(&pairs(&[("etta", "0.5")])).unwrap_err().to_string();
        assert!(msg.contains("etta"), "{msg}");
    }

    #[test]
    fn experimental_preset_and_overrides() {
        let cfg = build_config(&pairs(&[("preset", "experimental"), ("pnr", "5")])).unwrap();
        assert_eq!(cfg.sim.detector, DetectorModel::experimental(5));
        let cfg = build_config(&pairs(&[("preset", "experimental"), ("eta", "0.9")])).unwrap();
        assert_eq!(cfg.sim.detector.efficiency, 0.9);
        assert_eq!(cfg.sim.detector.visibility, 0.997);
    }

    #[test]
    fn lists_and_aliases() {
        let cfg = build_config(&pairs(&[
            ("alpha_sq_list", "10, 50,200"),
            ("objectives", "sharpness,mi"),
            ("steps", "12"),
        ]))
        .unwrap();
        assert_eq!(cfg.alpha_sq_list, vec![10.0, 50.0, 200.0]);
        assert_eq!(cfg.objectives, vec![Objective::Sharpness, Objective::MutualInformation]);
        assert_eq!(cfg.sim.steps, 12);
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(parse_file_text("alpha_sq 10").is_err());
        assert!(build_config(&pairs(&[("L", "ten")])).is_err());
        assert!(build_config(&pairs(&[("fixed_point", "true"), ("grid_size", "128")])).is_err());
    }

    #[test]
    fn entries_cover_every_key() {
        let keys: Vec<&str> = RunConfig::default().entries().iter().map(|(k, _)| *k).collect();
        assert_eq!(keys, KEYS);
    }
}
