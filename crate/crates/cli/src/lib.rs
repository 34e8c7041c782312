//! Command line front end: configuration, LUT files and result tables.

pub mod config;
pub mod lut_io;
pub mod output;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use pelt_core::harness::{
    bias_analysis, inject_sinusoid, run_ensemble, run_repeated, sweep_alpha_with, Ensemble,
    SimulationConfig, Strategy, SweepRow,
};
use pelt_core::optics::{beta_fi, bounds, cfi};
use pelt_core::strategy::{build_record_lut, build_variance_lut, RecordCache, RecordSource, VarianceLut};

use config::RunConfig;
use lut_io::LutKind;
use output::{Cell, Format, Table};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stale LUT: {0}")]
    StaleLut(String),
    #[error("corrupt LUT file: {0}")]
    CorruptLut(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

impl From<pelt_core::Error> for CliError {
    fn from(e: pelt_core::Error) -> Self {
        match e {
            pelt_core::Error::InvalidArgument(_) | pelt_core::Error::Configuration(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

pub const SWEEP_COLUMNS: &[&str] = &[
    "alpha_sq",
    "objective",
    "L",
    "pnr",
    "eta",
    "variance",
    "variance_x_qfi",
    "stderr",
    "crlb",
    "heterodyne",
    "n_trials",
    "seed",
];

const TRIAL_COLUMNS: &[&str] = &[
    "run",
    "trial",
    "seed",
    "phi0",
    "initial_lo_phase",
    "final_estimate",
    "argmax_estimate",
    "error",
    "record",
    "flag",
];

const KEY_HELP: &str = "Configuration keys (file `key = value` or flag `--key value`, flags win):
  preset alpha_sq objective L pnr eta visibility dark_rate step_duration grid_size
  k_switch beta_points beta_max_ratio delta_points sigma_points log10_sigma_min
  log10_sigma_max fixed_point trials seed workers alpha_sq_list objectives bins runs
  inject lut_dir
Angles are in radians everywhere.";

#[derive(Debug, Parser)]
#[command(name = "pelt", version, about = "Adaptive displaced-photon-counting phase estimation", after_help = KEY_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// key = value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; stdout when omitted
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build record and variance LUTs for every objective and alpha_sq_list entry
    LutBuild(Common),
    /// One ensemble: a summary row plus a per-trial file
    Run {
        #[command(flatten)]
        common: Common,
        /// Per-trial output; defaults to <out>_trials.<ext> when --out is given
        #[arg(long)]
        trials_out: Option<PathBuf>,
    },
    /// Variance versus alpha_sq for each objective
    Sweep(Common),
    /// Error versus initial LO phase, binned, with a circular-linear correlation test
    Bias {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials_out: Option<PathBuf>,
    },
    /// Variance-LUT maps over (alpha_sq, sigma^2)
    LutDump(Common),
    /// Fisher information and bounds versus the relative phase
    Analytics {
        #[command(flatten)]
        common: Common,
        /// Signal amplitude |alpha|
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        /// LO amplitude |beta|; defaults to the signal amplitude
        #[arg(long)]
        beta: Option<f64>,
        /// Number of phases on [-pi, pi]
        #[arg(long, default_value_t = 65)]
        points: usize,
    },
}

/// Splits `--key value` / `--key=value` configuration flags from the rest of
/// the command line.
pub fn split_config_flags(args: &[String]) -> Result<(Vec<String>, Vec<(String, String)>), CliError> {
    let mut rest = Vec::new();
    let mut pairs = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        if let Some(body) = arg.strip_prefix("--") {
            let (name, inline) = match body.split_once('=') {
                Some((n, v)) => (n, Some(v.to_string())),
                None => (body, None),
            };
            let key = name.replace('-', "_");
            if is_config_key(&key) {
                let value = match inline {
                    Some(v) => v,
                    None => {
                        i += 1;
                        args.get(i)
                            .cloned()
                            .ok_or_else(|| CliError::Config(format!("--{name} needs a value")))?
                    }
                };
                pairs.push((key, value));
                i += 1;
                continue;
            }
        }
        rest.push(arg.clone());
        i += 1;
    }
    Ok((rest, pairs))
}

fn is_config_key(key: &str) -> bool {
    config::KEYS.contains(&key) || key == "steps" || key == "master_seed"
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from_args(args: &[String]) -> Result<(), CliError> {
    let (rest, pairs) = split_config_flags(args)?;
    let cli = match Cli::try_parse_from(&rest) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Config(e.to_string())),
    };
    execute(&cli.command, &pairs)
}

pub fn execute(command: &Command, pairs: &[(String, String)]) -> Result<(), CliError> {
    let common = match command {
        Command::LutBuild(c) | Command::Sweep(c) | Command::LutDump(c) => c,
        Command::Run { common, .. } | Command::Bias { common, .. } | Command::Analytics { common, .. } => common,
    };
    let cfg = config::parse_config(common.config.as_deref(), pairs)?;
    let out = common.out.as_deref();
    match command {
        Command::LutBuild(_) => lut_build(&cfg)?.emit(&cfg, common.format, out),
        Command::Run { trials_out, .. } => {
            let (summary, trials) = run(&cfg)?;
            summary.emit(&cfg, common.format, out)?;
            if let Some(p) = trials_path(trials_out.as_deref(), out, common.format) {
                trials.emit(&cfg, common.format, Some(&p))?;
            }
            Ok(())
        }
        Command::Sweep(_) => sweep(&cfg)?.emit(&cfg, common.format, out),
        Command::Bias { trials_out, .. } => {
            let (bins, trials) = bias(&cfg)?;
            bins.emit(&cfg, common.format, out)?;
            if let Some(p) = trials_out {
                trials.emit(&cfg, common.format, Some(p))?;
            }
            Ok(())
        }
        Command::LutDump(_) => lut_dump(&cfg)?.emit(&cfg, common.format, out),
        Command::Analytics {
            amplitude,
            beta,
            points,
            ..
        } => analytics(&cfg, *amplitude, beta.unwrap_or(*amplitude), *points)?.emit(&cfg, common.format, out),
    }
}

fn trials_path(explicit: Option<&Path>, out: Option<&Path>, format: Format) -> Option<PathBuf> {
    if let Some(p) = explicit {
        return Some(p.to_path_buf());
    }
    let out = out?;
    let stem = out.file_stem()?.to_string_lossy();
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    Some(out.with_file_name(format!("{stem}_trials.{ext}")))
}

/// Strategy for `sim`, reading LUT files from `lut_dir` where present and
/// building whatever is missing in memory.
pub fn strategy_for(sim: &SimulationConfig, lut_dir: Option<&Path>) -> Result<Strategy, CliError> {
    let Some(dir) = lut_dir else {
        return Ok(Strategy::prepare(sim)?);
    };
    sim.validate()?;
    let grids = sim.grids()?;
    let record = if sim.needs_record_lut() {
        let path = lut_io::lut_path(dir, LutKind::Record, sim);
        Some(if path.exists() {
            RecordSource::Table(Arc::new(lut_io::load_record(&path, sim)?))
        } else {
            RecordSource::Lazy(Arc::new(RecordCache::new(
                sim.alpha_amp(),
                &sim.detector,
                sim.objective,
                &grids,
                sim.k_switch,
                sim.grid_size,
            )?))
        })
    } else {
        None
    };
    let variance = if sim.needs_variance_lut() {
        Some(Arc::new(variance_lut(sim, Some(dir))?))
    } else {
        None
    };
    Ok(Strategy::with_luts(sim, record, variance)?)
}

fn variance_lut(sim: &SimulationConfig, lut_dir: Option<&Path>) -> Result<VarianceLut, CliError> {
    if let Some(dir) = lut_dir {
        let path = lut_io::lut_path(dir, LutKind::Variance, sim);
        if path.exists() {
            return lut_io::load_variance(&path, sim);
        }
    }
    Ok(build_variance_lut(
        sim.alpha_amp(),
        &sim.detector,
        sim.objective,
        &sim.grids()?,
        &sim.sigma_grid()?,
        sim.grid_size,
    )?)
}

fn point_configs(cfg: &RunConfig) -> Vec<SimulationConfig> {
    cfg.objectives
        .iter()
        .flat_map(|o| {
            cfg.alpha_sq_list.iter().map(move |a| SimulationConfig {
                alpha_sq: *a,
                objective: *o,
                ..cfg.sim.clone()
            })
        })
        .collect()
}

pub fn lut_build(cfg: &RunConfig) -> Result<Table, CliError> {
    let dir = cfg.lut_dir.clone().unwrap_or_else(|| PathBuf::from("luts"));
    let mut t = Table::new("lut-build", &["alpha_sq", "objective", "kind", "entries", "path"]);
    for sim in point_configs(cfg) {
        if !sim.objective.is_optimized() {
            continue;
        }
        sim.validate()?;
        if sim.needs_record_lut() {
            let lut = build_record_lut(
                sim.alpha_amp(),
                &sim.detector,
                sim.objective,
                &sim.grids()?,
                sim.k_switch,
                sim.grid_size,
            )?;
            let path = lut_io::lut_path(&dir, LutKind::Record, &sim);
            lut_io::save_record(&path, &sim, &lut)?;
            t.push(lut_row(&sim, "record", lut.len(), &path));
        }
        if sim.needs_variance_lut() {
            let lut = variance_lut(&sim, None)?;
            let path = lut_io::lut_path(&dir, LutKind::Variance, &sim);
            lut_io::save_variance(&path, &sim, &lut)?;
            t.push(lut_row(&sim, "variance", lut.entries().len(), &path));
        }
    }
    Ok(t)
}

fn lut_row(sim: &SimulationConfig, kind: &str, entries: usize, path: &Path) -> Vec<Cell> {
    vec![
        sim.alpha_sq.into(),
        sim.objective.name().into(),
        kind.into(),
        entries.into(),
        path.display().to_string().into(),
    ]
}

fn sweep_cells(r: &SweepRow) -> Vec<Cell> {
    vec![
        r.alpha_sq.into(),
        r.objective.name().into(),
        r.steps.into(),
        r.pnr.into(),
        r.eta.into(),
        r.variance.into(),
        r.variance_x_qfi.into(),
        r.stderr.into(),
        r.crlb.into(),
        r.heterodyne.into(),
        r.n_trials.into(),
        r.seed.into(),
    ]
}

fn trial_rows(t: &mut Table, run: usize, ens: &Ensemble) {
    let mut done = ens.trials.iter();
    let mut flagged = ens.flagged.iter().peekable();
    let total = ens.trials.len() + ens.flagged.len();
    for i in 0..total {
        if flagged.peek().is_some_and(|f| f.index == i) {
            let f = flagged.next().expect("peeked");
            let mut row: Vec<Cell> = vec![run.into(), i.into(), f.seed.into()];
            row.extend(std::iter::repeat_n(Cell::Missing, 6));
            row.push(f.error.to_string().into());
            t.push(row);
            continue;
        }
        let tr = done.next().expect("completed trial");
        let record: Vec<String> = tr.record.iter().map(|n| n.to_string()).collect();
        t.push(vec![
            run.into(),
            i.into(),
            tr.seed.into(),
            tr.phi0.into(),
            tr.initial_lo_phase.into(),
            tr.final_estimate.into(),
            tr.argmax_estimate.into(),
            tr.error.into(),
            record.join(";").into(),
            Cell::Missing,
        ]);
    }
}

pub fn run(cfg: &RunConfig) -> Result<(Table, Table), CliError> {
    let strategy = strategy_for(&cfg.sim, cfg.lut_dir.as_deref())?;
    let mut columns = SWEEP_COLUMNS.to_vec();
    columns.extend(["sharpness", "n_flagged", "runs"]);
    let mut summary = Table::new("run", &columns);
    let mut trials = Table::new("run-trials", TRIAL_COLUMNS);

    if cfg.runs >= 2 {
        let rep = run_repeated(&strategy, cfg.runs, cfg.trials, cfg.seed)?;
        let qfi = 4.0 * cfg.sim.alpha_sq * cfg.sim.detector.efficiency;
        let mut row = SweepRow::from_stats(&cfg.sim, &rep.runs[0], cfg.seed)?;
        row.variance = rep.mean_variance;
        row.variance_x_qfi = rep.mean_variance * qfi;
        row.stderr = rep.stderr_variance * qfi;
        row.n_trials = rep.runs.iter().map(|r| r.n_trials).sum();
        let sharpness = rep.runs.iter().map(|r| r.sharpness).sum::<f64>() / cfg.runs as f64;
        let mut cells = sweep_cells(&row);
        let flagged = cfg.runs * cfg.trials - row.n_trials;
        cells.extend([sharpness.into(), flagged.into(), cfg.runs.into()]);
        summary.push(cells);
        for r in 0..cfg.runs {
            let ens = run_ensemble(&strategy, cfg.trials, pelt_core::harness::trial_seed(cfg.seed, r as u64))?;
            trial_rows(&mut trials, r, &ens);
        }
    } else {
        let ens = run_ensemble(&strategy, cfg.trials, cfg.seed)?;
        let row = SweepRow::from_stats(&cfg.sim, &ens.stats, cfg.seed)?;
        let mut cells = sweep_cells(&row);
        cells.extend([ens.stats.sharpness.into(), ens.flagged.len().into(), 1usize.into()]);
        summary.push(cells);
        trial_rows(&mut trials, 0, &ens);
    }
    Ok((summary, trials))
}

pub fn sweep(cfg: &RunConfig) -> Result<Table, CliError> {
    let mut t = Table::new("sweep", SWEEP_COLUMNS);
    for objective in &cfg.objectives {
        let base = SimulationConfig {
            objective: *objective,
            ..cfg.sim.clone()
        };
        let mut failure = None;
        let rows = sweep_alpha_with(&base, &cfg.alpha_sq_list, cfg.trials, cfg.seed, |sim| {
            strategy_for(sim, cfg.lut_dir.as_deref()).map_err(|e| {
                failure = Some(e.clone());
                pelt_core::Error::Configuration(e.to_string())
            })
        });
        let rows = match (rows, failure) {
            (Ok(rows), _) => rows,
            (Err(_), Some(e)) => return Err(e),
            (Err(e), None) => return Err(e.into()),
        };
        for r in &rows {
            t.push(sweep_cells(r));
        }
    }
    Ok(t)
}

pub fn bias(cfg: &RunConfig) -> Result<(Table, Table), CliError> {
    let strategy = strategy_for(&cfg.sim, cfg.lut_dir.as_deref())?;
    let ens = run_ensemble(&strategy, cfg.trials, cfg.seed)?;
    let trials = if cfg.inject != 0.0 {
        inject_sinusoid(&ens.trials, cfg.inject)
    } else {
        ens.trials.clone()
    };
    let report = bias_analysis(&trials, cfg.bins)?;
    let mut t = Table::new("bias", &["bin", "theta_lo", "theta_hi", "count", "mean_error", "stderr", "z"]);
    for (i, b) in report.bins.iter().enumerate() {
        t.push(vec![
            i.into(),
            b.lo.into(),
            b.hi.into(),
            b.count.into(),
            b.mean_error.into(),
            b.stderr.into(),
            b.z.into(),
        ]);
    }
    t.notes = vec![
        ("n_trials", report.n_trials.into()),
        ("n_flagged", ens.flagged.len().into()),
        ("global_mean", report.global_mean.into()),
        ("max_abs_z", report.max_abs_z.into()),
        ("correlation", report.correlation.into()),
        ("p_value", report.p_value.into()),
    ];
    let mut scatter = Table::new("bias-trials", &["trial", "initial_lo_phase", "error"]);
    for (i, tr) in trials.iter().enumerate() {
        scatter.push(vec![i.into(), tr.initial_lo_phase.into(), tr.error.into()]);
    }
    Ok((t, scatter))
}

pub fn lut_dump(cfg: &RunConfig) -> Result<Table, CliError> {
    let mut t = Table::new(
        "lut-dump",
        &[
            "alpha_sq",
            "objective",
            "sigma_sq",
            "log10_sigma_sq",
            "beta_opt",
            "beta_over_alpha",
            "delta_opt",
            "beta_fi",
            "beta_over_beta_fi",
        ],
    );
    for sim in point_configs(cfg) {
        if !sim.objective.is_optimized() {
            continue;
        }
        sim.validate()?;
        let lut = variance_lut(&sim, cfg.lut_dir.as_deref())?;
        let a = sim.alpha_amp();
        for (s, e) in lut.sigma_sq().iter().zip(lut.entries()) {
            let bfi = beta_fi(e.delta, a).ok();
            t.push(vec![
                sim.alpha_sq.into(),
                sim.objective.name().into(),
                (*s).into(),
                s.log10().into(),
                e.amplitude.into(),
                (e.amplitude / a).into(),
                e.delta.into(),
                bfi.into(),
                bfi.map(|b| e.amplitude / b).into(),
            ]);
        }
    }
    Ok(t)
}

pub fn analytics(cfg: &RunConfig, amplitude: f64, beta: f64, points: usize) -> Result<Table, CliError> {
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(CliError::Config(format!("amplitude out of range: must be > 0, got {amplitude}")));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(CliError::Config(format!("beta out of range: must be >= 0, got {beta}")));
    }
    if points < 2 {
        return Err(CliError::Config(format!("points out of range: must be >= 2, got {points}")));
    }
    let eta = cfg.sim.detector.efficiency;
    let b = bounds(amplitude * amplitude, eta)?;
    let mut t = Table::new(
        "analytics",
        &["delta", "alpha_amp", "beta_amp", "cfi", "qfi", "beta_fi", "cfi_at_beta_fi", "crlb", "heterodyne"],
    );
    for i in 0..points {
        let delta = std::f64::consts::PI * (2.0 * i as f64 / (points - 1) as f64 - 1.0);
        let bfi = beta_fi(delta, amplitude).ok();
        t.push(vec![
            delta.into(),
            amplitude.into(),
            beta.into(),
            cfi(delta, amplitude, beta).into(),
            (4.0 * amplitude * amplitude).into(),
            bfi.into(),
            bfi.map(|x| cfi(delta, amplitude, x)).into(),
            b.crlb.into(),
            b.heterodyne.into(),
        ]);
    }
    Ok(t)
}
