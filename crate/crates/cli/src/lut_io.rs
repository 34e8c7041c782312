//! Binary LUT files.
//!
//! Layout, all little-endian: magic `PELT`, format version (u32), LUT kind
//! (u8: 1 record, 2 variance), 16-byte fingerprint, value count (u64), then
//! the values as f64. Record LUTs store `(amplitude, offset)` per record in
//! canonical record order; variance LUTs store `(σ², amplitude, δ)` rows.
//!
//! The fingerprint is the first 16 bytes of the SHA-256 of every parameter
//! that affects the table, written as `key=value` lines.

use std::path::{Path, PathBuf};

use pelt_core::harness::SimulationConfig;
use pelt_core::strategy::{RecordLut, VarianceEntry, VarianceLut};
use pelt_core::DisplacementSetting;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MAGIC: &[u8; 4] = b"PELT";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 1 + 16 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LutKind {
    Record = 1,
    Variance = 2,
}

impl LutKind {
    fn name(&self) -> &'static str {
        match self {
            LutKind::Record => "record",
            LutKind::Variance => "variance",
        }
    }
}

pub type Fingerprint = [u8; 16];

pub fn fingerprint(kind: LutKind, sim: &SimulationConfig) -> Fingerprint {
    let d = &sim.detector;
    let mut text = format!(
        "kind={}\nalpha_sq={:?}\nL={}\nobjective={}\npnr={}\neta={:?}\nvisibility={:?}\n\
         dark_rate={:?}\nstep_duration={:?}\ngrid_size={}\nbeta_points={}\nbeta_max_ratio={:?}\n\
         delta_points={}\n",
        kind.name(),
        sim.alpha_sq,
        sim.steps,
        sim.objective,
        d.pnr,
        d.efficiency,
        d.visibility,
        d.dark_rate,
        d.step_duration,
        sim.grid_size,
        sim.beta_points,
        sim.beta_max_ratio,
        sim.delta_points,
    );
    match kind {
        LutKind::Record => text.push_str(&format!("k_switch={}\n", sim.k_switch)),
        LutKind::Variance => text.push_str(&format!(
            "sigma_points={}\nlog10_sigma_min={:?}\nlog10_sigma_max={:?}\n",
            sim.sigma_points, sim.log10_sigma_min, sim.log10_sigma_max
        )),
    }
    let digest = Sha256::digest(text.as_bytes());
    let mut fp = [0u8; 16];
    fp.copy_from_slice(&digest[..16]);
    fp
}

/// File name for one table of `sim` inside a LUT directory.
pub fn lut_path(dir: &Path, kind: LutKind, sim: &SimulationConfig) -> PathBuf {
    dir.join(format!("{}_{}_a{}.pelt", kind.name(), sim.objective, sim.alpha_sq))
}

pub fn encode(kind: LutKind, fp: &Fingerprint, values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind as u8);
    out.extend_from_slice(fp);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], kind: LutKind, expected: &Fingerprint) -> Result<Vec<f64>, CliError> {
    let corrupt = |why: &str| CliError::CorruptLut(why.to_string());
    if bytes.len() < HEADER_LEN {
        return Err(corrupt("file shorter than its header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(corrupt(&format!("unsupported format version {version}")));
    }
    if bytes[8] != kind as u8 {
        return Err(corrupt(&format!("expected a {} LUT, found kind {}", kind.name(), bytes[8])));
    }
    if &bytes[9..25] != expected {
        return Err(CliError::StaleLut(format!(
            "{} LUT was built for a different configuration",
            kind.name()
        )));
    }
    let count = u64::from_le_bytes(bytes[25..33].try_into().expect("8 bytes")) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != count.saturating_mul(8) {
        return Err(corrupt(&format!(
            "expected {count} values, found {} bytes of payload",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn record_values(lut: &RecordLut) -> Vec<f64> {
    lut.entries().iter().flat_map(|s| [s.amplitude, s.offset]).collect()
}

pub fn variance_values(lut: &VarianceLut) -> Vec<f64> {
    lut.sigma_sq()
        .iter()
        .zip(lut.entries())
        .flat_map(|(s, e)| [*s, e.amplitude, e.delta])
        .collect()
}

pub fn record_from_values(sim: &SimulationConfig, values: &[f64]) -> Result<RecordLut, CliError> {
    if values.len() % 2 != 0 {
        return Err(CliError::CorruptLut("record LUT payload is not (amplitude, offset) pairs".into()));
    }
    let entries = values
        .chunks_exact(2)
        .map(|c| DisplacementSetting {
            amplitude: c[0],
            offset: c[1],
        })
        .collect();
    RecordLut::from_entries(sim.detector.pnr, sim.k_switch, entries)
        .map_err(|e| CliError::CorruptLut(e.to_string()))
}

pub fn variance_from_values(values: &[f64]) -> Result<VarianceLut, CliError> {
    if values.len() % 3 != 0 {
        return Err(CliError::CorruptLut("variance LUT payload is not (σ², amplitude, δ) rows".into()));
    }
    let (sigma, entries): (Vec<f64>, Vec<VarianceEntry>) = values
        .chunks_exact(3)
        .map(|c| {
            (
                c[0],
                VarianceEntry {
                    amplitude: c[1],
                    delta: c[2],
                },
            )
        })
        .unzip();
    VarianceLut::from_parts(sigma, entries).map_err(|e| CliError::CorruptLut(e.to_string()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

pub fn save_record(path: &Path, sim: &SimulationConfig, lut: &RecordLut) -> Result<(), CliError> {
    let fp = fingerprint(LutKind::Record, sim);
    write(path, &encode(LutKind::Record, &fp, &record_values(lut)))
}

pub fn load_record(path: &Path, sim: &SimulationConfig) -> Result<RecordLut, CliError> {
    let values = decode(&read(path)?, LutKind::Record, &fingerprint(LutKind::Record, sim))?;
    record_from_values(sim, &values)
}

pub fn save_variance(path: &Path, sim: &SimulationConfig, lut: &VarianceLut) -> Result<(), CliError> {
    let fp = fingerprint(LutKind::Variance, sim);
    write(path, &encode(LutKind::Variance, &fp, &variance_values(lut)))
}

pub fn load_variance(path: &Path, sim: &SimulationConfig) -> Result<VarianceLut, CliError> {
    let values = decode(&read(path)?, LutKind::Variance, &fingerprint(LutKind::Variance, sim))?;
    variance_from_values(&values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pelt_core::strategy::{build_record_lut, build_variance_lut, Objective};

    fn small() -> SimulationConfig {
        SimulationConfig {
            alpha_sq: 10.0,
            objective: Objective::Sharpness,
            steps: 10,
            grid_size: 64,
            k_switch: 3,
            beta_points: 8,
            delta_points: 8,
            sigma_points: 6,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let sim = small();
        let dir = tempfile::tempdir().unwrap();
        let grids = sim.grids().unwrap();
        let rec = build_record_lut(sim.alpha_amp(), &sim.detector, sim.objective, &grids, sim.k_switch, sim.grid_size).unwrap();
        let var = build_variance_lut(sim.alpha_amp(), &sim.detector, sim.objective, &grids, &sim.sigma_grid().unwrap(), sim.grid_size).unwrap();

        let rp = lut_path(dir.path(), LutKind::Record, &sim);
        save_record(&rp, &sim, &rec).unwrap();
        let loaded = load_record(&rp, &sim).unwrap();
        assert_eq!(loaded, rec);
        let again = dir.path().join("again.pelt");
        save_record(&again, &sim, &loaded).unwrap();
        assert_eq!(std::fs::read(&rp).unwrap(), std::fs::read(&again).unwrap());

        let vp = lut_path(dir.path(), LutKind::Variance, &sim);
        save_variance(&vp, &sim, &var).unwrap();
        assert_eq!(load_variance(&vp, &sim).unwrap(), var);
    }

    #[test]
    fn changed_config_is_stale() {
        let sim = small();
        let fp = fingerprint(LutKind::Variance, &sim);
        let bytes = encode(LutKind::Variance, &fp, &[0.1, 1.0, 0.2]);
        let changed = SimulationConfig { alpha_sq: 11.0, ..sim.clone() };
        let err = decode(&bytes, LutKind::Variance, &fingerprint(LutKind::Variance, &changed)).unwrap_err();
        assert!(matches!(err, CliError::StaleLut(_)));
        // k_switch does not affect the variance table
        let k = SimulationConfig { k_switch: 5, ..sim.clone() };
        assert_eq!(fingerprint(LutKind::Variance, &k), fp);
        assert_ne!(fingerprint(LutKind::Record, &k), fingerprint(LutKind::Record, &sim));
    }

    #[test]
    fn truncation_is_corruption() {
        let sim = small();
        let fp = fingerprint(LutKind::Record, &sim);
        let bytes = encode(LutKind::Record, &fp, &[1.0, 0.1, 1.2, -0.3]);
        for cut in [3, 20, bytes.len() - 5, bytes.len() - 8] {
            let err = decode(&bytes[..cut], LutKind::Record, &fp).unwrap_err();
            assert!(matches!(err, CliError::CorruptLut(_)), "cut {cut}: {err:?}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, LutKind::Record, &fp), Err(CliError::CorruptLut(_))));
        assert!(matches!(decode(&bytes, LutKind::Variance, &fp), Err(CliError::CorruptLut(_))));
    }
}
