use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command as Process;

use multihost_cli::{parse_config_str, run, run_in, Command, RunError};

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

const FIGURE_ROW: &str = "\
command = \"region-map\"
workers = 1

[model]
alpha = 1.0
mu = 1.4142135623730951
delta = 1.0
r_max = 1.0

[solver]
spacing = 0.5
margin_widths = 5.0

[sweep]
beta = 1.0
resolution = [5, 5]
";

#[test]
fn eigen_single_host_reports_closed_form_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let c = parse_config_str("command = \"eigen\"\n[solver]\naccuracy = 1e-3\n", &[], None).unwrap();
    let out = run_in(&c, tmp.path(), None, true).unwrap();
    assert!(out.summary.contains("lambda1 closed form = 0.5"), "{}", out.summary);
    assert!(out.summary.contains("|lambda - lambda1|"));
    let names = files(tmp.path());
    assert!(names.contains_key("eigenvector_1.csv"));
    assert!(names.contains_key("eigen_metadata.txt"));
    assert!(names.contains_key("config.toml"));
}

#[test]
fn region_map_rows_match_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let c = parse_config_str(FIGURE_ROW, &[], None).unwrap();
    let out = run_in(&c, tmp.path(), Some(FIGURE_ROW), true).unwrap();
    let csv = fs::read_to_string(tmp.path().join("region_map.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 25);
    let mut keys: Vec<(&str, &str)> = rows
        .iter()
        .map(|r| {
            let mut it = r.split(',');
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), 25);
    assert!(out.summary.starts_with("rows = 25"));
}

#[test]
fn figure_row_config_is_echoed_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let c = parse_config_str(FIGURE_ROW, &[], None).unwrap();
    run_in(&c, tmp.path(), Some(FIGURE_ROW), false).unwrap();
    assert_eq!(fs::read_to_string(tmp.path().join("input.toml")).unwrap(), FIGURE_ROW);
    let echo = fs::read_to_string(tmp.path().join("config.toml")).unwrap();
    assert_eq!(parse_config_str(&echo, &[], None).unwrap(), c);
    let meta = fs::read_to_string(tmp.path().join("region_map_metadata.txt")).unwrap();
    assert!(meta.contains("solver.tol = 0.00000001"));
}

#[test]
fn identical_configs_give_identical_files() {
    let text = "command = \"dynamics\"\n[model]\noptima = [[-1.0], [1.0]]\ndelta = 1.0\nr_max = 1.5\nmu = 1.4142135623730951\n[solver]\nspacing = 0.2\n[dynamics]\nt_end = 5.0\ndt = 0.05\n";
    let c = parse_config_str(text, &[], None).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_in(&c, a.path(), Some(text), false).unwrap();
    run_in(&c, b.path(), Some(text), false).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.contains_key("trajectory.csv"));
    assert_eq!(fa, fb);
}

#[test]
fn dynamics_reports_fate_and_agreement() {
    let tmp = tempfile::tempdir().unwrap();
    let c = parse_config_str(
        "command = \"dynamics\"\n[model]\noptima = [[-1.0], [1.0]]\ndelta = 1.0\nr_max = 1.5\nmu = 1.4142135623730951\n[solver]\nspacing = 0.2\n[dynamics]\nt_end = 40.0\n",
        &[],
        None,
    )
    .unwrap();
    let out = run_in(&c, tmp.path(), None, true).unwrap();
    assert!(out.summary.starts_with("fate = persistence"), "{}", out.summary);
    assert!(out.summary.contains("sign agreement = yes"));
}

#[test]
fn assertion_failure_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let c = parse_config_str(
        "command = \"dynamics\"\n[model]\noptima = [[-3.0], [3.0]]\ndelta = 2.0\nr_max = 1.0\n[solver]\nspacing = 0.2\n[dynamics]\nt_end = 0.5\n",
        &[],
        None,
    )
    .unwrap();
    let err = run_in(&c, tmp.path(), None, true).unwrap_err();
    assert!(matches!(err, RunError::Assertion(_)), "{err}");
    assert!(tmp.path().join("checks.txt").exists());
}

#[test]
fn run_creates_timestamped_directory_and_latest_link() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().join("runs");
    let c = parse_config_str(
        "command = \"analytics\"\n[model]\noptima = [[-1.0, 0.0], [1.0, 0.0], [0.0, 0.5]]\ndelta = 1.0\n",
        &[format!("output_dir={:?}", root.display().to_string())],
        None,
    )
    .unwrap();
    let first = run(&c, None, true).unwrap();
    let second = run(&c, None, true).unwrap();
    assert_ne!(first.dir, second.dir);
    assert!(first.dir.file_name().unwrap().to_string_lossy().starts_with("analytics-"));
    let latest = fs::canonicalize(root.join("latest")).unwrap();
    assert_eq!(latest, fs::canonicalize(&second.dir).unwrap());
    let text = fs::read_to_string(second.dir.join("analytics.txt")).unwrap();
    assert!(text.contains("third.k = "));
    assert_eq!(c.command, Command::Analytics);
}

fn binary() -> Process {
    Process::new(env!("CARGO_BIN_EXE_multihost"))
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().display().to_string();

    let ok = binary()
        .args(["analytics", "--out", &out, "--set", "model.delta=0.5"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("lambda1 = 0.5"));

    let bad = binary().args(["eigen", "--out", &out, "--set", "model.alpha=-1"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("model.alpha"));

    let typo = binary().args(["eigen", "--out", &out, "--set", "model.alpah=1"]).output().unwrap();
    assert_eq!(typo.status.code(), Some(2));

    let solver = binary()
        .args(["eigen", "--out", &out, "--set", "solver.max_iter=1", "--set", "solver.tol=1e-15", "--set", "solver.radius=6.0", "--set", "solver.points=200"])
        .output()
        .unwrap();
    assert_eq!(solver.status.code(), Some(3), "{}", String::from_utf8_lossy(&solver.stderr));

    let failing = binary()
        .args([
            "dynamics", "--out", &out, "--assert",
            "--set", "model.optima=[[-3.0], [3.0]]", "--set", "model.delta=2.0", "--set", "model.r_max=1.0",
            "--set", "solver.spacing=0.2", "--set", "dynamics.t_end=0.5",
        ])
        .output()
        .unwrap();
    assert_eq!(failing.status.code(), Some(4));

    let help = binary().arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&help.stdout);
    for key in ["model.alpha", "solver.points", "dynamics.dt", "sweep.resolution", "workers"] {
        assert!(text.contains(key), "help lacks {key}");
    }
}
