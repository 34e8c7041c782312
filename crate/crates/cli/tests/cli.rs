use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--L", "6", "--grid-size", "64", "--k-switch", "3", "--beta-points", "8", "--delta-points", "8",
    "--sigma-points", "8",
];

fn pelt(args: &[&str], extra: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pelt"))
        .args(args)
        .args(extra)
        .output()
        .expect("pelt runs")
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn run_writes_summary_and_trial_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let mut args = vec!["run", "--trials", "2", "--alpha-sq", "4"];
    args.extend_from_slice(SMALL);
    args.push("--out");
    let o = pelt(&args, &[&out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&out).len(), 1);
    let trials = data_rows(&dir.path().join("run_trials.csv"));
    assert_eq!(trials.len(), 2);
    assert_eq!(trials[0][8].split(';').count(), 6);

    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# pelt "));
    assert!(text.contains("# alpha_sq=4\n"));
    assert!(text.contains("# L=6\n"));
}

#[test]
fn sweep_has_one_row_per_point_and_objective() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let mut args = vec!["sweep", "--trials", "3", "--alpha-sq-list", "1,2,4", "--objectives", "sharpness,mi"];
    args.extend_from_slice(SMALL);
    args.push("--out");
    let o = pelt(&args, &[&out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 6);
    let mi = rows.iter().filter(|r| r[1] == "mutual_information").count();
    assert_eq!(mi, 3);
}

#[test]
fn analytics_gives_half_the_bound_at_quarter_turn() {
    let o = pelt(&["analytics", "--points", "5", "--format", "json"], &[]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let row = &v["rows"][3];
    assert!((row["delta"].as_f64().unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    assert!((row["cfi"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!(row["beta_fi"].is_null());
    assert_eq!(v["header"]["command"], "analytics");
}

#[test]
fn exit_codes_separate_config_and_runtime_errors() {
    let o = pelt(&["run", "--eta", "1.5"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eta out of range"));

    let o = pelt(&["run", "--no-such-key", "3"], &[]);
    assert_eq!(o.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "alpha_sq = 4\nfrobnicate = 1\n").unwrap();
    let o = pelt(&["run", "--config"], &[&bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("frobnicate"));

    assert_eq!(pelt(&["--help"], &[]).status.code(), Some(0));
}

#[test]
fn stale_lut_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let luts = dir.path().join("luts");
    let luts_s = luts.to_str().unwrap();
    let mut build = vec!["lut-build", "--alpha-sq-list", "4", "--objectives", "sharpness", "--lut-dir", luts_s];
    build.extend_from_slice(SMALL);
    let o = pelt(&build, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_dir(&luts).unwrap().count(), 2);

    let mut run = vec!["run", "--trials", "2", "--alpha-sq", "4", "--lut-dir", luts_s];
    run.extend_from_slice(SMALL);
    let ok = pelt(&run, &[]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));

    // the same run without the files must give identical results
    let mut without = vec!["run", "--trials", "2", "--alpha-sq", "4"];
    without.extend_from_slice(SMALL);
    let fresh = pelt(&without, &[]);
    let strip = |o: &Output| {
        String::from_utf8_lossy(&o.stdout)
            .lines()
            .filter(|l| !l.starts_with("# lut_dir"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&ok), strip(&fresh));

    let mut stale = run.clone();
    stale.extend(["--beta-points", "9"]);
    let o = pelt(&stale, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stale"));
}

#[test]
fn bias_reports_bins_and_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bias.csv");
    let mut args = vec!["bias", "--trials", "120", "--alpha-sq", "4", "--bins", "8"];
    args.extend_from_slice(SMALL);
    args.push("--out");
    let o = pelt(&args, &[&out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(data_rows(&out).len(), 8);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("# result.p_value="));
}
