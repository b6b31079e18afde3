use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use varistep::ledger::{read_ledger, write_ledger};

const SMALL: &str = r#"
mode = "parabolic_solid"
tau = 0.005
h = 0.02
t_end = 0.03

[solid]
nodes = [5, 5]
spacing = 0.25

[container]
cells = [24, 16]

[force]
kind = "uniform"
value = [0.5, 0.0]
target = "solid"

[output]
stride = 2
"#;

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn varistep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varistep")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn run_small(dir: &Path) -> PathBuf {
    let cfg = dir.join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.join("out");
    let o = varistep(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn run_then_verify() {
    let dir = scratch("run");
    let out = run_small(&dir);
    for f in ["ledger.csv", "manifest.toml", "config.toml", "solid/step_000006.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let ledger = out.join("ledger.csv");
    let o = varistep(&["verify", "--ledger", ledger.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 failed"));
}

#[test]
fn tampered_ledger_fails_verification() {
    let dir = scratch("tamper");
    let ledger = run_small(&dir).join("ledger.csv");
    let (header, mut rows) = read_ledger(&fs::read(&ledger).unwrap()[..]).unwrap();
    rows[3].e += 1.0;
    let mut buf = Vec::new();
    write_ledger(&mut buf, &header, &rows).unwrap();
    fs::write(&ledger, buf).unwrap();
    let o = varistep(&["verify", "--ledger", ledger.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL step 3"));
}

#[test]
fn malformed_ledger_is_a_validation_error() {
    let dir = scratch("malformed");
    let ledger = dir.join("ledger.csv");
    fs::write(&ledger, "step,t\n0,0\n").unwrap();
    assert_eq!(code(&varistep(&["verify", "--ledger", ledger.to_str().unwrap()])), 2);
    assert_eq!(code(&varistep(&["verify", "--ledger", dir.join("missing.csv").to_str().unwrap()])), 1);
}

#[test]
fn invalid_config_exits_before_running() {
    let dir = scratch("invalid");
    let cfg = dir.join("bad.toml");
    fs::write(&cfg, SMALL.replace("h = 0.02", "h = 0.0123") + "\n[regularization]\na0 = 1.5\n").unwrap();
    let out = dir.join("out");
    let o = varistep(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("regularization.a0") && err.contains("h/tau"), "{err}");
    assert!(!out.exists());
}

#[test]
fn collision_exits_with_stop_code() {
    let dir = scratch("pinch");
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/pinch.toml");
    let out = dir.join("out");
    let o = varistep(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("stop_reason = \"collision\""), "{manifest}");
    // the partial ledger still verifies
    let o = varistep(&["verify", "--ledger", out.join("ledger.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
}

#[test]
fn plot_writes_csv_and_png() {
    let dir = scratch("plot");
    let ledger = run_small(&dir).join("ledger.csv");
    let plots = dir.join("plots");
    let o = varistep(&["plot", "--ledger", ledger.to_str().unwrap(), "--out", plots.to_str().unwrap(), "--columns", "E,slack_telescope"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["E.csv", "E.png", "slack_telescope.csv", "slack_telescope.png"] {
        assert!(plots.join(f).is_file(), "{f}");
    }
    assert_eq!(fs::read_to_string(plots.join("E.csv")).unwrap().lines().count(), 1 + 7);
    let o = varistep(&["plot", "--ledger", ledger.to_str().unwrap(), "--out", plots.to_str().unwrap(), "--columns", "nope"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_runs_every_value() {
    let dir = scratch("sweep");
    let cfg = dir.join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let out = dir.join("sweep");
    let o = varistep(&["sweep", "--config", cfg.to_str().unwrap(), "--param", "tau", "--values", "0.005,0.0025", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let rows: Vec<&str> = stdout.lines().filter(|l| l.starts_with("0.005\t") || l.starts_with("0.0025\t")).collect();
    assert_eq!(rows.len(), 2, "{stdout}");
    assert!(rows.iter().all(|r| r.split('\t').nth(2) == Some("completed")), "{stdout}");
    assert_eq!(fs::read_dir(&out).unwrap().count(), 2);
}
