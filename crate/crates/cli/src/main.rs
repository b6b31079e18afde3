use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_hollow_rect_mut, draw_line_segment_mut};
use imageproc::rect::Rect;

use varistep::io::{emit_outputs, parse_config, IoError};
use varistep::ledger::{
    fit_hoelder, read_ledger, summarize, verify_single_step, verify_telescoped, Check, LedgerHeader, LedgerRow,
    COLUMNS,
};
use varistep::steppers::{run, SchemeConfig, SchemeError, TrajectoryRecord};

const EXIT_VALIDATION: u8 = 2;
const EXIT_STOP: u8 = 3;
const EXIT_ASSERTION: u8 = 4;

#[derive(Parser)]
#[command(name = "varistep", version, about = "Variational time stepping for solids and fluid-structure interaction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its outputs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-check every energy inequality from a ledger file alone.
    Verify {
        #[arg(long)]
        ledger: PathBuf,
    },
    /// Run a configuration for several values of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Write one CSV and one PNG per ledger column.
    Plot {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
        /// Columns to plot; all but `step` and `t` when omitted.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    /// Inner step; `h` is kept.
    Tau,
    /// Outer step; `h/τ` is kept.
    H,
    TEnd,
    A0,
    K0,
    /// Solid nodes per axis on the unit square.
    Nodes,
}

fn apply_param(cfg: &SchemeConfig, p: SweepParam, v: f64) -> SchemeConfig {
    let mut c = cfg.clone();
    match p {
        SweepParam::Tau => c.tau = v,
        SweepParam::H => {
            let n = c.window() as f64;
            c.h = v;
            c.tau = v / n;
        }
        SweepParam::TEnd => c.t_end = v,
        SweepParam::A0 => c.regularization.a0 = v,
        SweepParam::K0 => c.regularization.k0 = v as usize,
        SweepParam::Nodes => {
            let n = v as usize;
            c.solid.nodes = [n, n];
            c.solid.spacing = 1.0 / (n.max(2) - 1) as f64;
        }
    }
    c
}

fn all_checks(header: &LedgerHeader, rows: &[LedgerRow]) -> (Vec<Check>, Option<f64>) {
    let mut checks = verify_single_step(header, rows);
    let tele = verify_telescoped(header, rows);
    checks.extend(tele.checks);
    (checks, tele.growth_constant)
}

fn report_checks(checks: &[Check]) -> bool {
    let failed: Vec<&Check> = checks.iter().filter(|c| !c.passed).collect();
    for c in failed.iter().take(20) {
        eprintln!("FAIL step {} {:?}: {:e}", c.step, c.kind, c.value);
    }
    if failed.len() > 20 {
        eprintln!("... {} more failures", failed.len() - 20);
    }
    println!("checks: {} passed, {} failed", checks.len() - failed.len(), failed.len());
    failed.is_empty()
}

fn load_config(path: &Path) -> Result<SchemeConfig, u8> {
    parse_config(path).map_err(|e| {
        match &e {
            IoError::Validation(v) => {
                eprintln!("{}: {} violation(s)", path.display(), v.len());
                for (field, msg) in v {
                    eprintln!("  {field}: {msg}");
                }
            }
            other => eprintln!("{other}"),
        }
        if matches!(e, IoError::Io { .. }) {
            1
        } else {
            EXIT_VALIDATION
        }
    })
}

fn run_one(cfg: &SchemeConfig, out: &Path) -> Result<(TrajectoryRecord, u8), u8> {
    let record = run(cfg).map_err(|e| {
        eprintln!("{e}");
        match e {
            SchemeError::Validation(_) => EXIT_VALIDATION,
            _ => EXIT_STOP,
        }
    })?;
    let manifest = emit_outputs(&record, cfg, out).map_err(|e| {
        eprintln!("{e}");
        1
    })?;
    println!("{} steps to t = {} ({}), outputs in {}", manifest.steps, manifest.end_time, manifest.stop_reason, out.display());
    let (checks, _) = all_checks(&record.header, &record.rows);
    let ok = report_checks(&checks);
    let code = if let Some(stop) = &record.stop {
        eprintln!("stopped at t = {} (step {}): {}", stop.t, stop.step, stop.reason);
        EXIT_STOP
    } else if !ok {
        EXIT_ASSERTION
    } else {
        0
    };
    Ok((record, code))
}

fn cmd_run(config: &Path, out: &Path) -> u8 {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match run_one(&cfg, out) {
        Ok((_, code)) | Err(code) => code,
    }
}

fn cmd_verify(path: &Path) -> u8 {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return 1;
        }
    };
    let (header, rows) = match read_ledger(BufReader::new(file)) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return EXIT_VALIDATION;
        }
    };
    let (checks, growth) = all_checks(&header, &rows);
    let s = summarize(&header, &rows);
    println!("{} rows, mode {}, min single slack {:e}, min telescoped slack {:e}", s.rows, header.mode, s.min_single_slack, s.min_telescope_slack);
    if let Some(c) = growth {
        println!("growth constant {c:e}");
    }
    if report_checks(&checks) {
        0
    } else {
        EXIT_ASSERTION
    }
}

fn cmd_sweep(config: &Path, param: SweepParam, values: &[f64], out: &Path) -> u8 {
    let base = match load_config(config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let name = param.to_possible_value().expect("named").get_name().to_string();
    let mut worst = 0;
    println!("{name}\tsteps\tstop\tmin_slack\tmin_telescope\tgrowth\thoelder\tmax_detJ_drift");
    for &v in values {
        let cfg = apply_param(&base, param, v);
        let violations = cfg.violations();
        if !violations.is_empty() {
            for (f, m) in &violations {
                eprintln!("{name}={v}: {f}: {m}");
            }
            worst = worst.max(EXIT_VALIDATION);
            continue;
        }
        let dir = out.join(format!("{name}_{v}"));
        match run_one(&cfg, &dir) {
            Ok((record, code)) => {
                worst = worst.max(code);
                let s = summarize(&record.header, &record.rows);
                let hoelder = fit_hoelder(&record.grid, &record.snapshots, cfg.tau);
                println!(
                    "{v}\t{}\t{}\t{:e}\t{:e}\t{}\t{}\t{:e}",
                    s.rows - 1,
                    record.stop.as_ref().map_or("completed", |x| x.reason.name()),
                    s.min_single_slack,
                    s.min_telescope_slack,
                    s.growth_constant.map_or("-".into(), |c| format!("{c:e}")),
                    hoelder.map_or("-".into(), |c| format!("{c:e}")),
                    s.max_det_j_drift,
                );
            }
            Err(code) => worst = worst.max(code),
        }
    }
    worst
}

fn column(row: &LedgerRow, name: &str) -> f64 {
    match name {
        "step" => row.step as f64,
        "t" => row.t,
        "E" => row.e,
        "E_h" => row.e_h,
        "R_step" => row.r_step,
        "fluid_diss" => row.fluid_diss,
        "kin_avg_solid" => row.kin_avg_solid,
        "kin_avg_fluid" => row.kin_avg_fluid,
        "work_f" => row.work_f,
        "slack_single" => row.slack_single,
        "slack_telescope" => row.slack_telescope,
        "cn_defect" => row.cn_defect,
        "min_det_eta" => row.min_det_eta,
        "max_detJ_drift" => row.max_det_j_drift,
        "self_distance" => row.self_distance,
        _ => f64::NAN,
    }
}

fn render(series: &[(f64, f64)]) -> RgbImage {
    let (w, h, m) = (640u32, 400u32, 30.0f32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let finite: Vec<(f64, f64)> = series.iter().copied().filter(|(_, y)| y.is_finite()).collect();
    let (t0, t1) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if !(y1 > y0) {
        y0 -= 0.5 * (1.0 + y0.abs());
        y1 = y0 + (1.0 + y0.abs());
    }
    let span_t = if t1 > t0 { t1 - t0 } else { 1.0 };
    let (pw, ph) = (w as f32 - 2.0 * m, h as f32 - 2.0 * m);
    let map = |t: f64, y: f64| (m + ((t - t0) / span_t) as f32 * pw, m + ((y1 - y) / (y1 - y0)) as f32 * ph);
    draw_hollow_rect_mut(&mut img, Rect::at(m as i32, m as i32).of_size(pw as u32, ph as u32), Rgb([120, 120, 120]));
    if y0 < 0.0 && y1 > 0.0 {
        draw_line_segment_mut(&mut img, map(t0, 0.0), map(t0 + span_t, 0.0), Rgb([200, 200, 200]));
    }
    for p in finite.windows(2) {
        draw_line_segment_mut(&mut img, map(p[0].0, p[0].1), map(p[1].0, p[1].1), Rgb([20, 60, 200]));
    }
    img
}

fn cmd_plot(path: &Path, out: &Path, columns: &[String]) -> u8 {
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return 1;
        }
    };
    let (_, rows) = match read_ledger(BufReader::new(file)) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return EXIT_VALIDATION;
        }
    };
    let names: Vec<String> = if columns.is_empty() {
        COLUMNS[2..].iter().map(|s| s.to_string()).collect()
    } else {
        columns.to_vec()
    };
    if let Some(bad) = names.iter().find(|n| !COLUMNS.contains(&n.as_str())) {
        eprintln!("unknown column {bad}; known: {}", COLUMNS.join(", "));
        return EXIT_VALIDATION;
    }
    if let Err(e) = fs::create_dir_all(out) {
        eprintln!("{}: {e}", out.display());
        return 1;
    }
    for name in &names {
        let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, column(r, name))).collect();
        let mut csv = format!("t,{name}\n");
        for (t, y) in &series {
            csv.push_str(&format!("{t:?},{y:?}\n"));
        }
        let csv_path = out.join(format!("{name}.csv"));
        let png_path = out.join(format!("{name}.png"));
        if let Err(e) = fs::write(&csv_path, csv) {
            eprintln!("{}: {e}", csv_path.display());
            return 1;
        }
        if let Err(e) = render(&series).save(&png_path) {
            eprintln!("{}: {e}", png_path.display());
            return 1;
        }
    }
    println!("{} column(s) written to {}", names.len(), out.display());
    0
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, out } => cmd_run(&config, &out),
        Command::Verify { ledger } => cmd_verify(&ledger),
        Command::Sweep { config, param, values, out } => cmd_sweep(&config, param, &values, &out),
        Command::Plot { ledger, out, columns } => cmd_plot(&ledger, &out, &columns),
    };
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_h_keeps_ratio() {
        let base = SchemeConfig::new(varistep::steppers::Mode::HyperbolicSolid, 0.05 / 16.0, 0.05, 0.5);
        let c = apply_param(&base, SweepParam::H, 0.025);
        assert_eq!(c.window(), 16);
        assert!(c.violations().is_empty());
    }

    #[test]
    fn every_column_is_readable() {
        let row = LedgerRow {
            step: 3,
            t: 0.5,
            e: 1.0,
            e_h: 1.5,
            r_step: 2.0,
            fluid_diss: 2.5,
            kin_avg_solid: 3.0,
            kin_avg_fluid: 3.5,
            work_f: 4.0,
            slack_single: 4.5,
            slack_telescope: 5.0,
            cn_defect: 5.5,
            min_det_eta: 6.0,
            max_det_j_drift: 6.5,
            self_distance: 7.0,
        };
        for (k, name) in COLUMNS.iter().enumerate().skip(2) {
            assert_eq!(column(&row, name), 0.5 * k as f64, "{name}");
        }
    }
}
