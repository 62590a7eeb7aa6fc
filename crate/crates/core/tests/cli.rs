use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SIMULATE_HEADER: &str = "t,demand,wind,price,R_E,R_H,x_wd,x_rd,x_hd,x_wr,x_hr,x_h,x_wx,cost,loss";

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn riskla(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riskla")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn small_config(dir: &TempDir, len: usize, policies: &str) -> String {
    write(
        dir,
        "small.toml",
        &format!(
            "seed = 1\n[system]\nepisode_length = {len}\nhorizon = {h}\n[data]\nsynthetic_peak = 50.0\n\
             [evaluation]\nscenarios = 3\nzeta = [0.0, 40.0]\n{policies}",
            h = len.min(2)
        ),
    )
}

fn quick() -> String {
    configs().join("quick.toml").to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_one_row_per_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir, 3, "[[policies]]\nkind = \"dla\"\ntheta = { constant = 0.5 }\n");
    let text = stdout(&riskla(&["simulate", "--config", &cfg]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], SIMULATE_HEADER);
    assert_eq!(lines.len(), 4);
    for (t, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 15);
        assert_eq!(fields[0], t.to_string());
        assert!(fields[1..].iter().all(|f| f.parse::<f64>().is_ok()));
    }
}

#[test]
fn simulate_selects_policy_and_theta() {
    let q = quick();
    let sla = stdout(&riskla(&["simulate", "--config", &q, "--policy", "S-LA"]));
    let by_kind = stdout(&riskla(&["simulate", "--config", &q, "--policy", "sla"]));
    assert_eq!(sla, by_kind);
    let half = stdout(&riskla(&["simulate", "--config", &q, "--theta", "0.5"]));
    let default = stdout(&riskla(&["simulate", "--config", &q]));
    assert_eq!(half, default);
    let zero = stdout(&riskla(&["simulate", "--config", &q, "--theta", "0"]));
    assert_ne!(zero, default);
    assert_ne!(
        stdout(&riskla(&["simulate", "--config", &q, "--seed", "1"])),
        stdout(&riskla(&["simulate", "--config", &q, "--seed", "2"]))
    );
}

#[test]
fn out_flag_writes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trace.csv");
    let result = riskla(&["simulate", "--config", &quick(), "--out", out.to_str().unwrap()]);
    assert!(stdout(&result).is_empty());
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with(SIMULATE_HEADER));
    assert_eq!(text.lines().count(), 15);
}

#[test]
fn evaluate_reports_every_policy() {
    let text = stdout(&riskla(&["evaluate", "--config", &quick(), "--scenarios", "2"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "policy,mean,q80,q90,q95,bpoe@0,bpoe@50");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["D-LA(theta=0.5)", "S-LA", "S-CVaR(alpha=0.8)", "S-BPoE(zeta=20)"]);

    let timed = stdout(&riskla(&["evaluate", "--config", &quick(), "--scenarios", "1", "--policy", "dla", "--timing"]));
    let lines: Vec<&str> = timed.lines().collect();
    assert!(lines[0].ends_with(",avg_decision_s"));
    assert_eq!(lines.len(), 2);
    let fields: Vec<f64> = lines[1].split(',').skip(1).map(|f| f.parse().unwrap()).collect();
    assert_eq!(fields[0], fields[3], "one scenario: mean equals q95");
    assert!(fields[fields.len() - 1] > 0.0);
}

#[test]
fn evaluate_theta_list_adds_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir, 5, "");
    let text = stdout(&riskla(&["evaluate", "--config", &cfg, "--theta", "0.2,1", "--zeta", "5"]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "policy,mean,q80,q90,q95,bpoe@5");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("D-LA(theta=0.2),"));
    assert!(lines[2].starts_with("D-LA(theta=1),"));
}

#[test]
fn empty_policy_list_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir, 5, "");
    let out = riskla(&["evaluate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: "));
}

#[test]
fn tune_grid_and_lookup_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir,
        "grid.toml",
        "[system]\nepisode_length = 6\nhorizon = 2\n[data]\nsynthetic_peak = 50.0\n\
         [tuning]\nmode = \"grid\"\nsamples = 2\ngrid = [1.0]\n",
    );
    let text = stdout(&riskla(&["tune", "--config", &cfg]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "iteration,theta,estimate");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0,1,"));

    let text = stdout(&riskla(&["tune", "--config", &quick()]));
    let header = text.lines().next().unwrap();
    assert_eq!(header, "iteration,theta_1,theta_2,theta_3,estimate");
}

#[test]
fn tune_sgd_on_the_quadratic_finds_one() {
    let text = stdout(&riskla(&["tune", "--config", configs().join("quadratic.toml").to_str().unwrap()]));
    let last = text.lines().last().unwrap();
    let theta: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!((theta - 1.0).abs() < 0.05, "theta {theta}");
}

#[test]
fn sweep_rows_and_monotonicity() {
    let q = quick();
    let one = stdout(&riskla(&["sweep-bpoe", "--config", &q, "--theta", "0.5", "--zeta", "10", "--scenarios", "3"]));
    assert_eq!(one.lines().collect::<Vec<_>>().len(), 2);
    assert_eq!(one.lines().next().unwrap(), "theta,zeta,bpoe");

    let text = stdout(&riskla(&["sweep-bpoe", "--config", &q, "--theta", "0.1,1", "--zeta", "0,20,40,80", "--scenarios", "5"]));
    let rows: Vec<(f64, f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|f| f.parse().unwrap()).collect();
            (v[0], v[1], v[2])
        })
        .collect();
    assert_eq!(rows.len(), 8);
    for pair in rows.windows(2) {
        if pair[0].0 == pair[1].0 {
            assert!(pair[1].2 <= pair[0].2);
        }
    }
}

#[test]
fn risk_command_values() {
    let dir = tempfile::tempdir().unwrap();
    let sample = write(&dir, "x.csv", "x\n1\n2\n3\n4\n");
    let text = stdout(&riskla(&["risk", "--sample", &sample, "--alpha", "0.5", "--zeta", "5,3.5"]));
    assert_eq!(
        text,
        "measure,level,value\nvar,0.5,2\ncvar,0.5,3.5\npoe,5,0\nbpoe,5,0\npoe,3.5,0.25\nbpoe,3.5,0.5\n"
    );
}

#[test]
fn empty_risk_sample_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let sample = write(&dir, "empty.csv", "x\n");
    let out = riskla(&["risk", "--sample", &sample, "--alpha", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: "));
    let blank = write(&dir, "blank.csv", "");
    assert_eq!(riskla(&["risk", "--sample", &blank, "--zeta", "1"]).status.code(), Some(2));
}

#[test]
fn missing_data_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir,
        "missing.toml",
        "[system]\nepisode_length = 3\nhorizon = 1\n[data]\ncsv = \"nowhere.csv\"\n[[policies]]\nkind = \"sla\"\nscenarios = 2\n",
    );
    let out = riskla(&["simulate", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.starts_with("error: "));
    assert!(err.contains(&dir.path().join("nowhere.csv").display().to_string()), "{err}");
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let q = quick();
    for args in [
        vec!["simulate", "--config", "/nonexistent.toml"],
        vec!["evaluate", "--config", q.as_str(), "--scenarios", "0"],
        vec!["evaluate", "--config", q.as_str(), "--theta", "-1"],
        vec!["sweep-bpoe", "--config", q.as_str(), "--zeta", "-3"],
        vec!["simulate", "--config", q.as_str(), "--policy", "nonesuch"],
        vec!["simulate", "--config", q.as_str(), "--bogus"],
    ] {
        let out = riskla(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    let bad = write(&dir, "bad.toml", "[system]\nepisode_length = 3\nhorizon = 9\n[data]\nsynthetic_peak = 10.0\n");
    let out = riskla(&["simulate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("horizon"));
    let unknown = write(&dir, "unknown.toml", "[system]\nepisode_length = 3\ncolour = 1\n[data]\nsynthetic_peak = 10.0\n");
    assert_eq!(riskla(&["simulate", "--config", &unknown]).status.code(), Some(2));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let out = riskla(&["simulate", "--config", &quick(), "--out", "/nonexistent/dir/trace.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).starts_with("error: "));
}
