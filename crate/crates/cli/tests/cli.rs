use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tentlab::probes::ProbeReport;

fn tentlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tentlab"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).trim().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

const APERTURE: &str = r#"
probe = "aperture"
seed = 7
n = 1
extent = 16.0
nx = 64
t_min = 0.0625
t_max = 0.45
nt = 16
provider = "heat"
p = [1.5, 2.0, 4.0]
beta = [-1.0]
alpha = [1.0, 2.0, 4.0, 8.0, 16.0]
m = 1
ensemble_size = 4
"#;

fn report_in(dir: &Path) -> ProbeReport {
    let json = fs::read_dir(dir.join("reports"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "json"))
        .unwrap();
    ProbeReport::from_json(&fs::read_to_string(json).unwrap()).unwrap()
}

#[test]
fn p_range_prints_the_interval() {
    let dir = tempfile::tempdir().unwrap();
    let out = tentlab(
        &["p-range", "--n", "4", "--m", "1", "--beta", "-1"],
        dir.path(),
    );
    assert!(out.status.success());
    assert_eq!(stdout(&out), "(1.3333333333333333, inf)");
}

#[test]
fn minimal_aperture_probe_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.toml"), APERTURE).unwrap();
    let first = tentlab(&["run", "a.toml"], dir.path());
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let a = report_in(dir.path());
    assert!(a.timestamp.is_some());

    let second = tentlab(&["--threads", "1", "run", "a.toml"], dir.path());
    assert_eq!(second.status.code(), Some(0));
    let b = report_in(dir.path());
    assert_eq!(
        a.deterministic_json().unwrap(),
        b.deterministic_json().unwrap()
    );
}

#[test]
fn csv_table_carries_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.toml"), APERTURE).unwrap();
    assert!(tentlab(&["run", "a.toml"], dir.path()).status.success());
    let report = report_in(dir.path());
    let csv_path = fs::read_dir(dir.path().join("reports"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "csv"))
        .unwrap();
    let csv = fs::read_to_string(csv_path).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        // Case keys contain commas; the last two columns are name and value.
        let (name, value) = (
            cols[cols.len() - 2],
            cols[cols.len() - 1].parse::<f64>().unwrap(),
        );
        let key = cols[..cols.len() - 2].join(",");
        assert_eq!(
            report.case(&key).unwrap().measurements[name].to_bits(),
            value.to_bits()
        );
        rows += 1;
    }
    assert!(rows > 0);
}

#[test]
fn beta_above_one_exits_with_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("b.toml"),
        APERTURE.replace("beta = [-1.0]", "beta = [1.5]"),
    )
    .unwrap();
    let out = tentlab(&["run", "b.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("beta < 1"), "{}", stderr(&out));
}

#[test]
fn missing_coefficient_file_exits_with_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = APERTURE.replace("\"heat\"", "\"divform\"") + "coefficients = \"nowhere.csv\"\n";
    fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let out = tentlab(&["run", "c.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("file not found"), "{}", stderr(&out));
}

#[test]
fn unknown_key_and_missing_seed_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("d.toml"),
        APERTURE.to_string() + "sede = 3\n",
    )
    .unwrap();
    let out = tentlab(&["run", "d.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("sede"));
    fs::write(dir.path().join("e.toml"), APERTURE.replace("seed = 7", "")).unwrap();
    let out = tentlab(&["run", "e.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("seed"));
}

#[test]
fn failed_verdict_exits_with_two() {
    // Cones narrower than a cell at t_min: the refined grid resolves them
    // differently and the stability verdict fails.
    let cfg = r#"
probe = "boundedness"
seed = 7
n = 2
extent = 16.0
nx = 16
t_min = 0.0016
t_max = 16.0
nt = 32
provider = "heat"
p = [2.0]
beta = [-1.0]
ensemble_size = 4
cutoff = 2
"#;
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("f.toml"), cfg).unwrap();
    let out = tentlab(&["run", "f.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn zero_field_has_zero_tent_norm() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("1,8,4,8.0,1.0,2.0\n");
    for i in 0..4 {
        for x in 0..8 {
            csv.push_str(&format!("{i},{x},0.0,0.0\n"));
        }
    }
    fs::write(dir.path().join("zero.csv"), csv).unwrap();
    let out = tentlab(&["tent-norm", "zero.csv", "--p", "2"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).parse::<f64>().unwrap(), 0.0);
}

#[test]
fn pipeline_reproduces_a_sweep_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"
probe = "boundedness"
seed = 11
n = 1
extent = 16.0
nx = 64
t_min = 0.25
t_max = 16.0
nt = 32
provider = "heat"
p = [3.0]
beta = [-1.0]
ensemble_size = 1
cutoff = 8
check_stability = false
"#;
    fs::write(dir.path().join("s.toml"), cfg).unwrap();
    let out = tentlab(&["run", "s.toml"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let cell = report_in(dir.path())
        .case("p=3,beta=-1")
        .unwrap()
        .measurements["ratio"];

    let gen = [
        "gen-field",
        "--kind",
        "bandlimited",
        "--seed",
        "11",
        "--member",
        "0",
        "--extent",
        "16",
        "--nx",
        "64",
        "--t-min",
        "0.25",
        "--t-max",
        "16",
        "--nt",
        "32",
        "--cutoff",
        "8",
        "-o",
        "f.csv",
    ];
    assert!(tentlab(&gen, dir.path()).status.success());
    let apply = tentlab(
        &["ml-apply", "f.csv", "--provider", "heat", "-o", "g.csv"],
        dir.path(),
    );
    assert!(apply.status.success(), "{}", stderr(&apply));
    let norm = |file: &str| {
        let out = tentlab(
            &["tent-norm", file, "--p", "3", "--m", "2", "--beta", "-1"],
            dir.path(),
        );
        stdout(&out).parse::<f64>().unwrap()
    };
    let ratio = norm("g.csv") / norm("f.csv");
    assert!((ratio - cell).abs() <= 1e-12 * cell, "{ratio} vs {cell}");
}

#[test]
fn generated_coefficients_drive_a_divform_probe() {
    let dir = tempfile::tempdir().unwrap();
    let gen = [
        "gen-field",
        "--kind",
        "coefficients",
        "--seed",
        "3",
        "--extent",
        "16",
        "--nx",
        "32",
        "--t-min",
        "1",
        "--t-max",
        "1",
        "--nt",
        "1",
        "-o",
        "a.csv",
    ];
    let out = tentlab(&gen, dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let cfg = r#"
probe = "l2-weighted"
seed = 2
n = 1
extent = 16.0
nx = 64
t_min = 0.01
t_max = 100.0
nt = 32
provider = "divform"
coefficients = "a.csv"
beta = [-1.0, 0.5]
ensemble_size = 3
"#;
    fs::write(dir.path().join("g.toml"), cfg).unwrap();
    let out = tentlab(&["run", "g.toml"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = report_in(dir.path());
    assert_eq!(report.cases.len(), 2);
}
