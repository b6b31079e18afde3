use super::increment::{solve_increment, Increment};
use super::{initial_row, transfer_diagnostics, Scheme, SchemeError, StepDiagnostics, StopRecord, StopReason, TrajectoryRecord};
use crate::energetics::korn_witness;
use crate::fluid::{build_mask, global_korn_report, GlobalVelocityField, StokesOperator};
use crate::geometry::{DeformationField, Vec2};
use crate::ledger::{LedgerRow, LedgerHeader};
use crate::minimize::{MinimizeReport, StepFeasibility};

/// Stokes operator reused across steps while the cell kinds do not change.
#[derive(Default)]
pub struct OperatorCache {
    op: Option<StokesOperator>,
    /// Number of factorizations performed.
    pub factorizations: usize,
}

/// One accepted parabolic step.
pub struct ParabolicStep {
    pub eta: DeformationField,
    pub b: Vec<Vec2>,
    pub row: LedgerRow,
    pub field: Option<GlobalVelocityField>,
    pub report: MinimizeReport,
    pub diagnostics: StepDiagnostics,
}

fn finish_step(
    scheme: &Scheme,
    eta_k: &DeformationField,
    step: usize,
    outcome: super::increment::IncrementOutcome,
    op: Option<&StokesOperator>,
    null_value: f64,
) -> ParabolicStep {
    let tau = scheme.config.tau;
    let t = &outcome.terms;
    let f: &StepFeasibility = &outcome.feasibility;
    let (fluid_diss, fluid_work, field) = match (op, &t.fluid) {
        (Some(op), Some(sol)) => {
            let u = &sol.field.faces;
            (op.strain_dissipation(u) + op.regularizer_dissipation(u), tau * op.force_pairing(u), Some(sol.field.clone()))
        }
        _ => (0.0, 0.0, None),
    };
    let row = LedgerRow {
        step: step + 1,
        t: (step + 1) as f64 * tau,
        e: t.e,
        e_h: t.e,
        r_step: t.r,
        fluid_diss,
        kin_avg_solid: 0.0,
        kin_avg_fluid: 0.0,
        work_f: t.work + fluid_work,
        slack_single: null_value - t.value,
        slack_telescope: 0.0,
        cn_defect: f.cn_defect,
        min_det_eta: f.min_det,
        max_det_j_drift: 0.0,
        self_distance: f.clearance(),
    };
    let (korn, interface, momentum, div) = match &field {
        Some(v) => {
            let (i, m) = transfer_diagnostics(scheme, eta_k, &outcome.b, v);
            let k = global_korn_report(v, eta_k, &outcome.b, &scheme.material).constant();
            (k, Some(i), Some(m), Some(v.max_fluid_divergence()))
        }
        None => (korn_witness(eta_k, &outcome.b, &scheme.material), None, None, None),
    };
    let r = &outcome.report;
    let diagnostics = StepDiagnostics {
        step: step + 1,
        grad_norm: r.grad_norm,
        iters: r.iters,
        evaluations: r.evaluations,
        termination: r.termination,
        sweeps: 1,
        korn,
        interface_mismatch: interface,
        momentum_mismatch: momentum,
        max_divergence: div,
        feasibility: *f,
    };
    ParabolicStep { eta: outcome.eta, b: outcome.b, row, field, report: outcome.report, diagnostics }
}

/// `η_{k+1}` minimizing `E(η) + τR(η_k, b) − τρ_s⟨f∘η_k, b⟩`.
pub fn step_parabolic_solid(scheme: &Scheme, eta_k: &DeformationField, step: usize) -> Result<ParabolicStep, StopRecord> {
    let tau = scheme.config.tau;
    let (t0, t1) = (step as f64 * tau, (step + 1) as f64 * tau);
    let stop = |reason| StopRecord { reason, t: t1, step: step + 1 };
    let force = scheme.nodal_force(eta_k, t0, t1);
    let inc = Increment::new(scheme, eta_k, false, None, force, None);
    let tol = &scheme.config.tolerances;
    let outcome = solve_increment(&inc, tol.grad_tol, tol.max_iters).map_err(stop)?;
    let null_value = scheme.energy(eta_k, false);
    Ok(finish_step(scheme, eta_k, step, outcome, None, null_value))
}

/// Coupled step: the fluid velocity is eliminated exactly for every
/// candidate `η`, so the reduced functional in `η` carries the Stokes
/// dissipation and the flux compatibility becomes a linear constraint.
pub fn step_parabolic_fsi(
    scheme: &Scheme,
    eta_k: &DeformationField,
    step: usize,
    cache: &mut OperatorCache,
) -> Result<ParabolicStep, StopRecord> {
    let tau = scheme.config.tau;
    let (t0, t1) = (step as f64 * tau, (step + 1) as f64 * tau);
    let stop = |reason| StopRecord { reason, t: t1, step: step + 1 };
    let tol = &scheme.config.tolerances;
    let mask = build_mask(eta_k, &scheme.fluid_grid, tol.subsamples)
        .map_err(|e| stop(StopReason::Collision(e.to_string())))?;
    let force = scheme.fluid_force(t0, t1);
    let reuse = match cache.op.as_mut() {
        Some(op) => op.rebind(&mask),
        None => false,
    };
    if reuse {
        let op = cache.op.as_mut().expect("checked");
        op.set_force(force.as_deref());
    } else {
        let op = StokesOperator::new(&mask, scheme.stokes_params(tau, 0.0), force.as_deref(), None)
            .map_err(|e| stop(StopReason::Singular(e.to_string())))?;
        cache.op = Some(op);
        cache.factorizations += 1;
    }
    let op = cache.op.as_ref().expect("set above");
    let nodal = scheme.nodal_force(eta_k, t0, t1);
    let inc = Increment::new(scheme, eta_k, false, None, nodal, Some(op));
    let outcome = solve_increment(&inc, tol.grad_tol, tol.max_iters).map_err(stop)?;
    let null_value = scheme.energy(eta_k, false);
    Ok(finish_step(scheme, eta_k, step, outcome, Some(op), null_value))
}

pub fn run_parabolic(scheme: &Scheme, eta0: DeformationField) -> Result<TrajectoryRecord, SchemeError> {
    let cfg = &scheme.config;
    let e0 = scheme.energy(&eta0, false);
    let header: LedgerHeader = scheme.header(e0);
    let mut record = TrajectoryRecord::new(header, scheme.grid.clone());
    let tol = &cfg.tolerances;
    let f0 = StepFeasibility::assess(&eta0, &scheme.container, tol.subsamples, tol.det_floor, tol.contact_gap, tol.cn_tol)?;
    record.push(initial_row(e0, e0, 0.0, 0.0, &f0), &eta0);
    let mut cache = OperatorCache::default();
    let mut eta = eta0;
    for k in 0..cfg.steps() {
        let res = if cfg.mode.has_fluid() {
            step_parabolic_fsi(scheme, &eta, k, &mut cache)
        } else {
            step_parabolic_solid(scheme, &eta, k)
        };
        match res {
            Ok(s) => {
                record.push(s.row, &s.eta);
                if cfg.output.stride > 0 && (k + 1) % cfg.output.stride == 0 {
                    if let Some(f) = s.field {
                        record.fields.push((k + 1, f));
                    }
                }
                record.diagnostics.push(s.diagnostics);
                eta = s.eta;
            }
            Err(stop) => {
                record.stop = Some(stop);
                break;
            }
        }
    }
    record.finish();
    Ok(record)
}
