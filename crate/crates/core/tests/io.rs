use std::fs;
use std::path::PathBuf;

use varistep::io::*;
use varistep::ledger::read_ledger;
use varistep::steppers::{run, SchemeConfig};

const SHIPPED: &str = include_str!("../../../configs/parabolic_solid.toml");

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("io").join(name);
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn short(stride: usize) -> SchemeConfig {
    let mut c = parse_config_str(SHIPPED).unwrap();
    c.solid.nodes = [5, 5];
    c.solid.spacing = 0.25;
    c.container.cells = [24, 16];
    c.t_end = 4.0 * c.tau;
    c.output.stride = stride;
    c
}

fn violations(text: &str) -> Vec<(String, String)> {
    match parse_config_str(text) {
        Err(IoError::Validation(v)) => v,
        other => panic!("expected violations, got {other:?}"),
    }
}

#[test]
fn shipped_config_parses() {
    let c = parse_config_str(SHIPPED).unwrap();
    assert_eq!(c.window(), 16);
    assert_eq!(c.steps(), 100);
    assert_eq!(c.material.a, 5.0);
}

#[test]
fn every_shipped_config_parses() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        parse_config(&path).unwrap_or_else(|e| panic!("{e}"));
        n += 1;
    }
    assert!(n >= 4);
}

#[test]
fn regularization_exponent_out_of_range() {
    let v = violations(&format!("{SHIPPED}\n[regularization]\na0 = 1.2\n"));
    assert!(v.iter().any(|(f, m)| f == "regularization.a0" && m.contains("a0 < 1")), "{v:?}");
}

#[test]
fn barrier_exponent_too_small() {
    let v = violations(&format!("{SHIPPED}\n[material]\na = 4.0\n"));
    assert!(v.iter().any(|(f, m)| f == "material.a" && m.contains("a > qn/(q-n)")), "{v:?}");
}

#[test]
fn all_violations_are_collected() {
    let text = SHIPPED.replace("h = 0.08", "h = 0.0123").replace("t_end = 0.5", "t_end = -1.0");
    let v = violations(&format!("{text}\n[material]\na = 4.0\n"));
    let fields: Vec<&str> = v.iter().map(|(f, _)| f.as_str()).collect();
    for f in ["h", "t_end", "material.a"] {
        assert!(fields.contains(&f), "{fields:?}");
    }
}

#[test]
fn unknown_and_malformed_fields_are_parse_errors() {
    assert!(matches!(parse_config_str("mode = \"sideways\"\ntau = 0.1\n"), Err(IoError::Parse { .. })));
    assert!(matches!(parse_config_str(&format!("{SHIPPED}\nbogus = 1\n")), Err(IoError::Parse { .. })));
}

#[test]
fn hash_is_stable_and_sensitive() {
    let a = parse_config_str(SHIPPED).unwrap();
    let b = parse_config_str(&canonical_config(&a)).unwrap();
    assert_eq!(config_hash(&a), config_hash(&b));
    assert_eq!(config_hash(&a).len(), 64);
    let mut c = a.clone();
    c.tau *= 0.5;
    assert_ne!(config_hash(&a), config_hash(&c));
}

#[test]
fn stride_zero_writes_ledger_only() {
    let cfg = short(0);
    let record = run(&cfg).unwrap();
    let dir = scratch("stride0");
    let manifest = emit_outputs(&record, &cfg, &dir).unwrap();
    assert!(dir.join(LEDGER_FILE).is_file());
    assert!(dir.join(MANIFEST_FILE).is_file());
    for sub in ["solid", "fields", "markers"] {
        assert!(!dir.join(sub).exists(), "{sub}");
    }
    assert_eq!(manifest.outputs, vec![LEDGER_FILE, "config.toml", MANIFEST_FILE]);
}

#[test]
fn outputs_and_manifest() {
    let cfg = short(2);
    let record = run(&cfg).unwrap();
    let dir = scratch("stride2");
    let manifest = emit_outputs(&record, &cfg, &dir).unwrap();
    assert_eq!(manifest.steps, 4);
    assert_eq!(manifest.stop_reason, "completed");
    assert_eq!(manifest.mode, "parabolic_solid");
    assert_eq!(manifest.config_hash, config_hash(&cfg));
    assert!((manifest.end_time - 4.0 * cfg.tau).abs() < 1e-15);
    for f in ["solid/step_000000.txt", "solid/step_000002.txt", "solid/step_000004.txt"] {
        assert!(manifest.outputs.iter().any(|o| o == f), "{f}");
        let text = fs::read_to_string(dir.join(f)).unwrap();
        assert_eq!(text.lines().count(), 1 + 25);
    }
    assert!(!dir.join("solid/step_000001.txt").exists());
    let on_disk: RunManifest = toml::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(on_disk, manifest);
    let copy = parse_config(&dir.join("config.toml")).unwrap();
    assert_eq!(config_hash(&copy), manifest.config_hash);
    let (header, rows) = read_ledger(&fs::read(dir.join(LEDGER_FILE)).unwrap()[..]).unwrap();
    assert_eq!(header, record.header);
    assert_eq!(rows, record.rows);
}

#[test]
fn reruns_write_identical_ledgers() {
    let cfg = short(0);
    let a = scratch("rerun_a");
    let b = scratch("rerun_b");
    let ma = emit_outputs(&run(&cfg).unwrap(), &cfg, &a).unwrap();
    let mb = emit_outputs(&run(&cfg).unwrap(), &cfg, &b).unwrap();
    assert_eq!(ma, mb);
    assert_eq!(fs::read(a.join(LEDGER_FILE)).unwrap(), fs::read(b.join(LEDGER_FILE)).unwrap());
}
