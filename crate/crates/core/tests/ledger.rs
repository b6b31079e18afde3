mod common;

use common::unit_grid;
use proptest::prelude::*;
use varistep::geometry::Vec2;
use varistep::ledger::*;

fn header(mode: &str, window: usize) -> LedgerHeader {
    LedgerHeader { mode: mode.into(), tau: 0.01, h: 0.01 * window as f64, window, ineq_tol: 2e-8 }
}

fn blank(step: usize, tau: f64) -> LedgerRow {
    LedgerRow {
        step,
        t: step as f64 * tau,
        e: 1.0,
        e_h: 1.0,
        r_step: 0.0,
        fluid_diss: 0.0,
        kin_avg_solid: 0.0,
        kin_avg_fluid: 0.0,
        work_f: 0.0,
        slack_single: 0.0,
        slack_telescope: 0.0,
        cn_defect: 0.0,
        min_det_eta: 1.0,
        max_det_j_drift: 0.0,
        self_distance: 0.5,
    }
}

fn stationary(n: usize) -> Vec<LedgerRow> {
    (0..=n).map(|k| blank(k, 0.01)).collect()
}

fn failures(h: &LedgerHeader, rows: &[LedgerRow]) -> Vec<Check> {
    verify_single_step(h, rows)
        .into_iter()
        .chain(verify_telescoped(h, rows).checks)
        .filter(|c| !c.passed)
        .collect()
}

#[test]
fn stationary_ledger_passes() {
    let h = header("parabolic_solid", 4);
    assert!(failures(&h, &stationary(12)).is_empty());
    let s = summarize(&h, &stationary(12));
    assert_eq!(s.failed_checks, 0);
    assert_eq!(s.total_work, 0.0);
    assert_eq!(s.total_dissipation, 0.0);
}

#[test]
fn raised_energy_fails() {
    let h = header("parabolic_solid", 4);
    let mut rows = stationary(12);
    rows[5].e += 1.0;
    let f = failures(&h, &rows);
    assert!(f.iter().any(|c| c.step == 5 && c.kind == CheckKind::SingleMatch));
    assert!(f.iter().any(|c| c.step == 5 && c.kind == CheckKind::TelescopeMatch));
    // storing the honest slack still fails on sign
    rows[5].slack_single = -1.0;
    rows[5].slack_telescope = -1.0;
    let f = failures(&h, &rows);
    assert!(f.iter().any(|c| c.step == 5 && c.kind == CheckKind::SingleSign));
    assert!(f.iter().any(|c| c.step == 5 && c.kind == CheckKind::TelescopeSign));
}

#[test]
fn time_delayed_epoch_check_sees_energy_gain() {
    let h = header("hyperbolic_solid", 4);
    let mut rows = stationary(8);
    for r in &mut rows[5..] {
        r.e_h += 1e-3;
        r.slack_telescope = -1e-3;
    }
    let f = failures(&h, &rows);
    assert!(f.iter().any(|c| c.step == 8 && c.kind == CheckKind::Epoch));
    // intermediate rows are only matched, not sign checked
    assert!(!f.iter().any(|c| c.step == 5 && c.kind == CheckKind::TelescopeSign));
    assert!(f.iter().any(|c| c.step == 8 && c.kind == CheckKind::TelescopeSign));
}

#[test]
fn csv_round_trip_is_exact() {
    let h = LedgerHeader { mode: "hyperbolic_fsi".into(), tau: 0.003125, h: 0.05, window: 16, ineq_tol: 1.0000000000000002e-8 };
    let mut rows = stationary(5);
    for (k, r) in rows.iter_mut().enumerate() {
        r.e = 1.0 / (k as f64 + 3.0);
        r.work_f = -1e-17 * k as f64;
        r.cn_defect = std::f64::consts::PI * 1e-9;
        r.t = 0.003125 * k as f64;
    }
    let mut buf = Vec::new();
    write_ledger(&mut buf, &h, &rows).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("step,t,E,E_h,R_step"));
    let (h2, rows2) = read_ledger(&buf[..]).unwrap();
    assert_eq!(h2, h);
    assert_eq!(rows2, rows);
}

#[test]
fn malformed_ledgers_are_rejected() {
    let ok = "# mode=parabolic_solid tau=0.01 h=0.04 window=4 ineq_tol=1e-8\n";
    let cols = COLUMNS.join(",");
    let row = |step: usize, t: f64| format!("{step},{t},1,1,0,0,0,0,0,0,0,0,1,0,0.5\n");
    let bad_header = format!("{cols}\n{}", row(0, 0.0));
    assert!(matches!(read_ledger(bad_header.as_bytes()), Err(LedgerError::SchemaMismatch(_))));
    let bad_cols = format!("{ok}{}\n{}", cols.replace("E_h", "Eh"), row(0, 0.0));
    assert!(matches!(read_ledger(bad_cols.as_bytes()), Err(LedgerError::SchemaMismatch(_))));
    let backwards = format!("{ok}{cols}\n{}{}", row(0, 0.02), row(1, 0.01));
    assert!(matches!(read_ledger(backwards.as_bytes()), Err(LedgerError::SchemaMismatch(_))));
    let good = format!("{ok}{cols}\n{}{}", row(0, 0.0), row(1, 0.01));
    assert_eq!(read_ledger(good.as_bytes()).unwrap().1.len(), 2);
}

#[test]
fn hoelder_fit_of_uniform_drift() {
    let grid = unit_grid(5, Vec2::new(1.0, 0.5));
    let c = Vec2::new(0.3, -0.4);
    let tau = 0.01;
    let snaps: Vec<(f64, Vec<Vec2>)> = (0..=20)
        .map(|k| {
            let t = k as f64 * tau;
            (t, (0..grid.node_count()).map(|n| grid.reference_position(n) + c * t).collect())
        })
        .collect();
    // a translation has zero gradient, so the norm is |c|·Δt·√area
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=20 {
        for j in i + 2..=20 {
            let dt = (j - i) as f64 * tau;
            num += 0.5 * dt * dt.sqrt();
            den += dt;
        }
    }
    let expected = num / den;
    let got = fit_hoelder(&grid, &snaps, tau).unwrap();
    assert!((got - expected).abs() < 1e-12 * expected, "{got} vs {expected}");
    assert_eq!(fit_hoelder(&grid, &snaps[..9], tau), None);
}

fn ledger_strategy(kind: &'static str) -> impl Strategy<Value = (LedgerHeader, Vec<LedgerRow>)> {
    prop::collection::vec((0.5f64..2.0, 0.0f64..1.0, -0.1f64..0.1, 0.0f64..0.2, 0.0f64..0.5), 2..40).prop_map(
        move |v| {
            let h = header(kind, 4);
            let rows = v
                .iter()
                .enumerate()
                .map(|(k, &(e, r, w, d, kin))| {
                    let mut row = blank(k, h.tau);
                    row.e = e;
                    row.e_h = e + 0.01;
                    row.r_step = r;
                    row.work_f = if k == 0 { 0.0 } else { w };
                    row.fluid_diss = d;
                    row.kin_avg_solid = kin;
                    row
                })
                .collect();
            (h, rows)
        },
    )
}

proptest! {
    #[test]
    fn telescope_is_sum_of_single_slacks((h, rows) in ledger_strategy("parabolic_fsi")) {
        let tele = telescoped_slacks(&h, &rows);
        let mut acc = 0.0;
        prop_assert_eq!(tele[0], 0.0);
        for k in 1..rows.len() {
            acc += parabolic_single_slack(h.tau, &rows[k - 1], &rows[k]);
            prop_assert!((tele[k] - acc).abs() < 1e-12 * (1.0 + acc.abs()));
        }
    }

    #[test]
    fn energy_shift_leaves_slacks_unchanged((h, rows) in ledger_strategy("hyperbolic_solid"), shift in -5.0f64..5.0) {
        let moved: Vec<LedgerRow> = rows.iter().map(|r| LedgerRow { e: r.e + shift, e_h: r.e_h + shift, ..*r }).collect();
        let a = telescoped_slacks(&h, &rows);
        let b = telescoped_slacks(&h, &moved);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12 * (1.0 + shift.abs()));
        }
    }

    #[test]
    fn epoch_checks_are_differences_of_prefix_slacks((h, rows) in ledger_strategy("hyperbolic_fsi")) {
        let tele = telescoped_slacks(&h, &rows);
        let report = verify_telescoped(&h, &rows);
        let epochs: Vec<&Check> = report.checks.iter().filter(|c| c.kind == CheckKind::Epoch).collect();
        prop_assert_eq!(epochs.len(), (rows.len() - 1) / h.window);
        for c in epochs {
            let b = c.step;
            let a = b - h.window;
            prop_assert!((c.value - (tele[b] - tele[a])).abs() < 1e-12);
        }
        prop_assert!(report.growth_constant.unwrap() > 0.0);
    }
}
