//! Configuration parsing, run manifests and plain-text output files.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fluid::CellKind;
use crate::geometry::Vec2;
use crate::ledger::{write_ledger, LedgerError};
use crate::steppers::{SchemeConfig, TrajectoryRecord};

pub const LEDGER_FILE: &str = "ledger.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{} configuration violation(s): {}", .0.len(), .0.iter().map(|(f, m)| format!("{f}: {m}")).collect::<Vec<_>>().join("; "))]
    Validation(Vec<(String, String)>),
    #[error("{path}: {source}")]
    Ledger { path: PathBuf, source: LedgerError },
}

impl IoError {
    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
        move |source| IoError::Io { path: path.to_path_buf(), source }
    }
}

/// Parses and validates a TOML configuration. All semantic violations are
/// reported together, each with its field path.
pub fn parse_config_str(text: &str) -> Result<SchemeConfig, IoError> {
    let cfg: SchemeConfig = toml::from_str(text).map_err(|e| IoError::Parse {
        path: PathBuf::from("<config>"),
        message: e.to_string(),
    })?;
    let v = cfg.violations();
    if v.is_empty() {
        Ok(cfg)
    } else {
        Err(IoError::Validation(v))
    }
}

pub fn parse_config(path: &Path) -> Result<SchemeConfig, IoError> {
    let text = fs::read_to_string(path).map_err(IoError::io(path))?;
    parse_config_str(&text).map_err(|e| match e {
        IoError::Parse { message, .. } => IoError::Parse { path: path.to_path_buf(), message },
        other => other,
    })
}

/// Canonical text of a configuration; every field is written, defaults included.
pub fn canonical_config(cfg: &SchemeConfig) -> String {
    toml::to_string(cfg).expect("configuration serializes")
}

/// SHA-256 of the canonical configuration text, hex encoded.
pub fn config_hash(cfg: &SchemeConfig) -> String {
    hex::encode(Sha256::digest(canonical_config(cfg).as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub mode: String,
    pub start_time: f64,
    pub end_time: f64,
    pub steps: usize,
    /// `completed` or the name of the stop reason.
    pub stop_reason: String,
    pub stop_detail: Option<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(cfg: &SchemeConfig, record: &TrajectoryRecord) -> Self {
        let last = record.rows.last();
        Self {
            config_hash: config_hash(cfg),
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode: cfg.mode.name().to_string(),
            start_time: 0.0,
            end_time: last.map_or(0.0, |r| r.t),
            steps: last.map_or(0, |r| r.step),
            stop_reason: record.stop.as_ref().map_or("completed".to_string(), |s| s.reason.name().to_string()),
            stop_detail: record.stop.as_ref().map(|s| format!("t={} step={}: {}", s.t, s.step, s.reason)),
            outputs: Vec::new(),
        }
    }
}

fn kind_code(k: CellKind) -> u8 {
    match k {
        CellKind::Fluid => 0,
        CellKind::Solid => 1,
        CellKind::Wall => 2,
    }
}

fn write_text(dir: &Path, rel: &str, text: &str, outputs: &mut Vec<String>) -> Result<(), IoError> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(IoError::io(parent))?;
    }
    fs::write(&path, text).map_err(IoError::io(&path))?;
    outputs.push(rel.to_string());
    Ok(())
}

/// Writes the ledger, the strided field, solid and marker dumps, a copy of
/// the configuration and the manifest into `dir`. Contents depend only on
/// the record and the configuration.
pub fn emit_outputs(record: &TrajectoryRecord, cfg: &SchemeConfig, dir: &Path) -> Result<RunManifest, IoError> {
    fs::create_dir_all(dir).map_err(IoError::io(dir))?;
    let mut manifest = RunManifest::new(cfg, record);
    let mut outputs = Vec::new();

    let ledger_path = dir.join(LEDGER_FILE);
    let file = fs::File::create(&ledger_path).map_err(IoError::io(&ledger_path))?;
    let mut out = BufWriter::new(file);
    write_ledger(&mut out, &record.header, &record.rows)
        .map_err(|source| IoError::Ledger { path: ledger_path.clone(), source })?;
    out.flush().map_err(IoError::io(&ledger_path))?;
    outputs.push(LEDGER_FILE.to_string());

    write_text(dir, "config.toml", &canonical_config(cfg), &mut outputs)?;

    let stride = cfg.output.stride;
    if stride > 0 {
        let grid = &record.grid;
        for (row, (_, eta)) in record.rows.iter().zip(&record.snapshots) {
            let step = row.step;
            if step % stride != 0 {
                continue;
            }
            let mut s = String::from("# X Y x y\n");
            for (k, p) in eta.iter().enumerate() {
                let x = grid.reference_position(k);
                let _ = writeln!(s, "{:e} {:e} {:e} {:e}", x.x, x.y, p.x, p.y);
            }
            write_text(dir, &format!("solid/step_{step:06}.txt"), &s, &mut outputs)?;
        }
        for (step, field) in &record.fields {
            let g = &field.grid;
            let mut s = String::from("# x y u v p kind\n");
            for j in 0..g.ny() {
                for i in 0..g.nx() {
                    let c = g.cell(i, j);
                    let x = g.container.min.x + (i as f64 + 0.5) * g.dx();
                    let y = g.container.min.y + (j as f64 + 0.5) * g.dy();
                    let u = field.velocity_at(Vec2::new(x, y));
                    let _ = writeln!(s, "{x:e} {y:e} {:e} {:e} {:e} {}", u.x, u.y, field.pressure[c], kind_code(field.kinds[c]));
                }
            }
            write_text(dir, &format!("fields/step_{step:06}.txt"), &s, &mut outputs)?;
        }
        for (step, rows) in &record.markers {
            let mut s = String::from("# x0 y0 x y detJ\n");
            for r in rows {
                let _ = writeln!(s, "{:e} {:e} {:e} {:e} {:e}", r[0], r[1], r[2], r[3], r[4]);
            }
            write_text(dir, &format!("markers/step_{step:06}.txt"), &s, &mut outputs)?;
        }
    }

    outputs.push(MANIFEST_FILE.to_string());
    manifest.outputs = outputs;
    let text = toml::to_string(&manifest).expect("manifest serializes");
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(IoError::io(&path))?;
    Ok(manifest)
}
