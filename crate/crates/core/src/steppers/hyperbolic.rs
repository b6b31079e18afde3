use std::collections::VecDeque;

use super::increment::{solve_increment, Increment};
use super::{
    initial_row, transfer_diagnostics, window_mean, EpochSummary, Scheme, SchemeError, StepDiagnostics, StopRecord,
    StopReason, TrajectoryRecord,
};
use crate::energetics::korn_witness;
use crate::flowmap::{advance, check_det_bounds, det_drift, inertia_quadratic, sample_markers, FlowMapError, FlowMapState};
use crate::fluid::{build_mask, global_korn_report, StokesOperator};
use crate::geometry::{DeformationField, Vec2};
use crate::ledger::LedgerRow;
use crate::minimize::StepFeasibility;

/// Velocity data `w_k` for the sub-steps of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochData {
    /// Nodal solid velocities, one field per sub-step.
    pub solid: Vec<Vec<Vec2>>,
    /// Marker velocities, one list per sub-step (FSI only).
    pub fluid: Option<Vec<Vec<Vec2>>>,
}

/// State carried across sub-steps and epochs.
#[derive(Debug, Clone)]
pub struct TdState {
    pub eta: DeformationField,
    pub step: usize,
    pub flow: Option<FlowMapState>,
    /// Last `h/τ` values of `ρ_s/2‖b‖²_M`.
    pub kin_solid: VecDeque<f64>,
    /// Last `h/τ` values of `ρ_f/2‖v∘Φ‖²` over the markers.
    pub kin_fluid: VecDeque<f64>,
}

fn marker_kinetic(scheme: &Scheme, flow: &FlowMapState, w: &[Vec2]) -> f64 {
    0.5 * scheme.material.rho_f * flow.markers.iter().zip(w).map(|(m, v)| m.volume * v.norm_squared()).sum::<f64>()
}

/// One epoch of `h/τ` time-delayed steps. Accepted rows are appended to
/// `record`; returns the data for the next epoch.
pub fn run_time_delayed_epoch(
    scheme: &Scheme,
    state: &mut TdState,
    data: &EpochData,
    record: &mut TrajectoryRecord,
) -> Result<EpochData, StopRecord> {
    let cfg = &scheme.config;
    let tau = cfg.tau;
    let n = cfg.window();
    let tol = &cfg.tolerances;
    let fsi = cfg.mode.has_fluid();
    let t_start = state.step as f64 * tau;
    let mut next_solid = Vec::with_capacity(n);
    let mut next_fluid = Vec::with_capacity(n);

    if fsi {
        state.flow = Some(match &state.flow {
            Some(f) => f.restart(),
            None => {
                let mask = build_mask(&state.eta, &scheme.fluid_grid, tol.subsamples).map_err(|e| StopRecord {
                    reason: StopReason::Collision(e.to_string()),
                    t: t_start,
                    step: state.step,
                })?;
                FlowMapState::seed(&mask, t_start)
            }
        });
    }

    for k in 0..n {
        let step = state.step;
        let (t0, t1) = (step as f64 * tau, (step + 1) as f64 * tau);
        let stop = |reason| StopRecord { reason, t: t1, step: step + 1 };
        let eta_k = state.eta.clone();
        let w = &data.solid[k];
        let nodal = scheme.nodal_force(&eta_k, t0, t1);
        let w_norm: f64 = w.iter().zip(&scheme.mass).map(|(v, m)| m * v.norm_squared()).sum();
        let mut null_value = scheme.energy(&eta_k, true) + tau * scheme.material.rho_s / (2.0 * cfg.h) * w_norm;

        let op = if fsi {
            let flow = state.flow.as_ref().expect("seeded");
            let wf = &data.fluid.as_ref().expect("fluid data")[k];
            let mask = build_mask(&eta_k, &scheme.fluid_grid, tol.subsamples)
                .map_err(|e| stop(StopReason::Collision(e.to_string())))?;
            let extras = inertia_quadratic(flow, &scheme.fluid_grid, wf, tau * scheme.material.rho_f / (2.0 * cfg.h));
            null_value += extras.constant;
            let force = scheme.fluid_force(t0, t1);
            Some(
                StokesOperator::new(&mask, scheme.stokes_params(tau, cfg.h), force.as_deref(), Some(&extras))
                    .map_err(|e| stop(StopReason::Singular(e.to_string())))?,
            )
        } else {
            None
        };
        let inc = Increment::new(scheme, &eta_k, true, Some(w), nodal, op.as_ref());
        let outcome = solve_increment(&inc, tol.grad_tol, tol.max_iters).map_err(stop)?;
        let t = &outcome.terms;

        state.kin_solid.pop_front();
        state.kin_solid.push_back(scheme.kinetic(&outcome.b));
        next_solid.push(outcome.b.clone());

        let (mut fluid_diss, mut fluid_work, mut drift) = (0.0, 0.0, 0.0);
        let mut diag = (korn_witness(&eta_k, &outcome.b, &scheme.material), None, None, None);
        if let (Some(op), Some(sol)) = (op.as_ref(), t.fluid.as_ref()) {
            let u = &sol.field.faces;
            fluid_diss = op.strain_dissipation(u) + op.regularizer_dissipation(u);
            fluid_work = tau * op.force_pairing(u);
            let flow = state.flow.as_ref().expect("seeded");
            let samples = sample_markers(flow, &sol.field);
            state.kin_fluid.pop_front();
            state.kin_fluid.push_back(marker_kinetic(scheme, flow, &samples));
            next_fluid.push(samples);
            let moved = advance(flow, &sol.field, tau).map_err(|e| match e {
                FlowMapError::MarkerEscaped { .. } => stop(StopReason::MarkerEscaped(e.to_string())),
                FlowMapError::DetDrift { det, .. } => stop(StopReason::DetDrift(det)),
            })?;
            check_det_bounds(&moved).map_err(|e| match e {
                FlowMapError::DetDrift { det, .. } => stop(StopReason::DetDrift(det)),
                other => stop(StopReason::MarkerEscaped(other.to_string())),
            })?;
            drift = det_drift(&moved).max_abs_dev;
            let (i, m) = transfer_diagnostics(scheme, &eta_k, &outcome.b, &sol.field);
            diag = (
                global_korn_report(&sol.field, &eta_k, &outcome.b, &scheme.material).constant(),
                Some(i),
                Some(m),
                Some(sol.field.max_fluid_divergence()),
            );
            if cfg.output.stride > 0 && (step + 1) % cfg.output.stride == 0 {
                record.fields.push((step + 1, sol.field.clone()));
                if cfg.output.markers {
                    let rows = moved
                        .markers
                        .iter()
                        .map(|m| [m.origin.x, m.origin.y, m.position.x, m.position.y, m.jacobian.determinant()])
                        .collect();
                    record.markers.push((step + 1, rows));
                }
            }
            state.flow = Some(moved);
        }

        let f: &StepFeasibility = &outcome.feasibility;
        let row = LedgerRow {
            step: step + 1,
            t: t1,
            e: t.e,
            e_h: t.e_h,
            r_step: t.r,
            fluid_diss,
            kin_avg_solid: window_mean(&state.kin_solid),
            kin_avg_fluid: if fsi { window_mean(&state.kin_fluid) } else { 0.0 },
            work_f: t.work + fluid_work,
            slack_single: null_value - t.value,
            slack_telescope: 0.0,
            cn_defect: f.cn_defect,
            min_det_eta: f.min_det,
            max_det_j_drift: drift,
            self_distance: f.clearance(),
        };
        record.push(row, &outcome.eta);
        let r = &outcome.report;
        record.diagnostics.push(StepDiagnostics {
            step: step + 1,
            grad_norm: r.grad_norm,
            iters: r.iters,
            evaluations: r.evaluations,
            termination: r.termination,
            sweeps: 1,
            korn: diag.0,
            interface_mismatch: diag.1,
            momentum_mismatch: diag.2,
            max_divergence: diag.3,
            feasibility: *f,
        });
        state.eta = outcome.eta;
        state.step += 1;
    }
    record.epochs.push(EpochSummary {
        index: record.epochs.len(),
        t_start,
        t_end: state.step as f64 * tau,
        drift: state.flow.as_ref().map(det_drift),
    });
    Ok(EpochData { solid: next_solid, fluid: fsi.then_some(next_fluid) })
}

/// Chains epochs until `t_end` or the first stop. Before `t = 0` the
/// velocities are continued by their initial values.
pub fn run_hyperbolic(scheme: &Scheme, eta0: DeformationField) -> Result<TrajectoryRecord, SchemeError> {
    let cfg = &scheme.config;
    let n = cfg.window();
    let tol = &cfg.tolerances;
    let e0 = scheme.energy(&eta0, false);
    let eh0 = scheme.energy(&eta0, true);
    let mut record = TrajectoryRecord::new(scheme.header(eh0), scheme.grid.clone());
    let f0 = StepFeasibility::assess(&eta0, &scheme.container, tol.subsamples, tol.det_floor, tol.contact_gap, tol.cn_tol)?;

    let v0 = scheme.initial_solid_velocity();
    let kin_s = scheme.kinetic(&v0);
    let mut state = TdState {
        eta: eta0,
        step: 0,
        flow: None,
        kin_solid: VecDeque::from(vec![kin_s; n]),
        kin_fluid: VecDeque::new(),
    };
    let mut data = EpochData { solid: vec![v0; n], fluid: None };
    let mut kin_f = 0.0;
    if cfg.mode.has_fluid() {
        let mask = build_mask(&state.eta, &scheme.fluid_grid, tol.subsamples)?;
        let flow = FlowMapState::seed(&mask, 0.0);
        let u = cfg.initial.fluid_velocity;
        let w = vec![Vec2::new(u[0], u[1]); flow.markers.len()];
        kin_f = marker_kinetic(scheme, &flow, &w);
        state.kin_fluid = VecDeque::from(vec![kin_f; n]);
        data.fluid = Some(vec![w; n]);
        state.flow = Some(flow);
    }
    record.push(initial_row(e0, eh0, kin_s, kin_f, &f0), &state.eta);

    let epochs = (cfg.t_end / cfg.h - 1e-9).ceil().max(0.0) as usize;
    for _ in 0..epochs {
        match run_time_delayed_epoch(scheme, &mut state, &data, &mut record) {
            Ok(next) => data = next,
            Err(stop) => {
                record.stop = Some(stop);
                break;
            }
        }
    }
    record.finish();
    Ok(record)
}
