use std::cell::RefCell;

use super::{Scheme, StopReason};
use crate::energetics::{energy, energy_gradient};
use crate::fluid::{FluidError, StokesOperator, StokesSolution};
use crate::geometry::jets::{cell_gradient, scatter_gradient};
use crate::geometry::{DeformationField, Mat2, Vec2};
use crate::minimize::{
    check_step_acceptance, solve, MinimizeError, MinimizeProblem, MinimizeReport, Preconditioner, Rejection,
    StepFeasibility,
};
use nalgebra::DMatrix;

/// One incremental functional in the unknown `η`, with `b = (η − η_k)/τ`:
/// `E_*(η) + τR_*(η_k, b) + τρ_s/(2h)‖b − w‖²_M − τ⟨ρ_s M f, b⟩ + F(b)`,
/// where `F` is the fluid part minimized over `v` for the trace of `b`.
pub(crate) struct Increment<'a> {
    pub scheme: &'a Scheme,
    pub eta_k: &'a DeformationField,
    /// Use `E_h`, `R_h` instead of `E`, `R`.
    pub regularized: bool,
    /// Previous-epoch nodal velocities for the inertial term.
    pub inertia: Option<&'a [Vec2]>,
    /// Nodal force already multiplied by `ρ_s M`.
    pub force: Vec<Vec2>,
    pub fluid: Option<&'a StokesOperator>,
    f_cells: Vec<Mat2>,
}

/// The pieces of the functional at one point.
pub(crate) struct Terms {
    pub e: f64,
    pub e_h: f64,
    /// Dissipation rate `R_*(η_k, b)`.
    pub r: f64,
    /// `τ⟨ρ_s M f, b⟩`.
    pub work: f64,
    pub fluid: Option<StokesSolution>,
    pub value: f64,
}

impl<'a> Increment<'a> {
    pub fn new(
        scheme: &'a Scheme,
        eta_k: &'a DeformationField,
        regularized: bool,
        inertia: Option<&'a [Vec2]>,
        force: Vec<Vec2>,
        fluid: Option<&'a StokesOperator>,
    ) -> Self {
        let grid = eta_k.grid();
        let f_cells = (0..grid.cell_count()).map(|c| cell_gradient(grid, c, eta_k.positions())).collect();
        Self { scheme, eta_k, regularized, inertia, force, fluid, f_cells }
    }

    fn h(&self) -> f64 {
        if self.regularized {
            self.scheme.reg.h
        } else {
            0.0
        }
    }

    fn rate(&self, b: &[Vec2]) -> f64 {
        let grid = self.eta_k.grid();
        let h2 = grid.spacing().powi(2);
        let mut r = 0.0;
        for (c, f) in self.f_cells.iter().enumerate() {
            let gb = cell_gradient(grid, c, b);
            r += h2 * (gb.transpose() * f + f.transpose() * gb).norm_squared();
        }
        if self.h() > 0.0 {
            r += self.h() * self.scheme.regularizer.norm_sq(b);
        }
        r
    }

    fn velocity(&self, x: &[f64]) -> Vec<Vec2> {
        let tau = self.scheme.config.tau;
        x.chunks_exact(2)
            .zip(self.eta_k.positions())
            .map(|(p, q)| (Vec2::new(p[0], p[1]) - q) / tau)
            .collect()
    }

    /// Evaluates all terms; `grad` receives the derivative in `η`.
    pub fn terms(&self, x: &[f64], grad: Option<&mut [f64]>) -> Result<Terms, FluidError> {
        let s = self.scheme;
        let tau = s.config.tau;
        let eta = DeformationField::from_flat(self.eta_k.grid_arc().clone(), x).expect("length checked by caller");
        let e = energy(&eta, &s.material);
        if !e.is_finite() {
            return Ok(Terms { e, e_h: e, r: 0.0, work: 0.0, fluid: None, value: f64::INFINITY });
        }
        let h = self.h();
        let e_h = if h > 0.0 { e + h.powf(s.reg.a0) * s.regularizer.norm_sq(eta.positions()) } else { e };
        let b = self.velocity(x);
        let r = self.rate(&b);
        let mass = &s.mass;
        let inertia = match self.inertia {
            Some(w) => {
                let k = tau * s.material.rho_s / (2.0 * s.config.h);
                k * b.iter().zip(w).zip(mass).map(|((bi, wi), m)| m * (bi - wi).norm_squared()).sum::<f64>()
            }
            None => 0.0,
        };
        let work = tau * self.force.iter().zip(&b).map(|(f, v)| f.dot(v)).sum::<f64>();
        let fluid = match self.fluid {
            Some(op) => Some(op.solve(&op.mask().trace_values(&b))?),
            None => None,
        };
        let value = e_h + tau * r + inertia - work + fluid.as_ref().map_or(0.0, |f| f.value);

        if let Some(grad) = grad {
            let n = x.len() / 2;
            let mut g = match energy_gradient(&eta, &s.material) {
                Ok(g) => g,
                Err(_) => vec![Vec2::repeat(f64::NAN); n],
            };
            self.add_quadratic_gradient(eta.positions(), &b, &mut g);
            for i in 0..n {
                g[i] -= self.force[i];
            }
            if let (Some(op), Some(sol)) = (self.fluid, &fluid) {
                let t = op.mask().trace_adjoint(&sol.trace_gradient, n);
                for i in 0..n {
                    g[i] += t[i] / tau;
                }
            }
            for (i, v) in g.iter().enumerate() {
                grad[2 * i] = v.x;
                grad[2 * i + 1] = v.y;
            }
        }
        Ok(Terms { e, e_h, r, work, fluid, value })
    }

    /// Derivative in `η` of the parts that are quadratic in `η` for fixed `η_k`:
    /// the regularizer of `E_h`, the dissipation and the inertial term.
    fn add_quadratic_gradient(&self, eta: &[Vec2], b: &[Vec2], g: &mut [Vec2]) {
        let s = self.scheme;
        let h = self.h();
        if h > 0.0 {
            s.regularizer.add_gradient(eta, h.powf(s.reg.a0), g);
        }
        let grid = self.eta_k.grid();
        let h2 = grid.spacing().powi(2);
        for (c, f) in self.f_cells.iter().enumerate() {
            let gb = cell_gradient(grid, c, b);
            let rate = gb.transpose() * f + f.transpose() * gb;
            scatter_gradient(grid, c, &(f * rate * (4.0 * h2)), g);
        }
        if h > 0.0 {
            s.regularizer.add_gradient(b, h, g);
        }
        if let Some(w) = self.inertia {
            let k = s.material.rho_s / s.config.h;
            for ((gi, (bi, wi)), m) in g.iter_mut().zip(b.iter().zip(w)).zip(&s.mass) {
                *gi += (bi - wi) * (k * m);
            }
        }
    }

    /// Hessian of the quadratic parts, assembled column by column, with
    /// identity rows on fixed nodes.
    fn preconditioner(&self) -> Option<Preconditioner> {
        let grid = self.eta_k.grid();
        let n = grid.node_count();
        let tau = self.scheme.config.tau;
        let base_eta = self.eta_k.positions();
        let zero = vec![Vec2::zeros(); n];
        let mut base = zero.clone();
        self.add_quadratic_gradient(base_eta, &zero, &mut base);
        let mut hess = DMatrix::zeros(2 * n, 2 * n);
        let mut eta = base_eta.to_vec();
        let mut b = zero.clone();
        for j in 0..2 * n {
            let (node, comp) = (j / 2, j % 2);
            if grid.is_dirichlet(node) {
                hess[(j, j)] = 1.0;
                continue;
            }
            eta[node][comp] += 1.0;
            b[node][comp] = 1.0 / tau;
            let mut g = zero.clone();
            self.add_quadratic_gradient(&eta, &b, &mut g);
            eta[node][comp] = base_eta[node][comp];
            b[node][comp] = 0.0;
            for (i, (gi, bi)) in g.iter().zip(&base).enumerate() {
                if grid.is_dirichlet(i) {
                    continue;
                }
                hess[(2 * i, j)] = gi.x - bi.x;
                hess[(2 * i + 1, j)] = gi.y - bi.y;
            }
        }
        let sym = (&hess + hess.transpose()) * 0.5;
        Preconditioner::new(sym)
    }

    /// Flux compatibility of the fluid part as constraints on `η`.
    fn constraints(&self) -> Vec<Vec<f64>> {
        let Some(op) = self.fluid else { return Vec::new() };
        let n = self.eta_k.grid().node_count();
        op.flux_rows()
            .iter()
            .map(|row| op.mask().trace_adjoint(row, n).iter().flat_map(|v| [v.x, v.y]).collect::<Vec<f64>>())
            .filter(|v| v.iter().any(|a| *a != 0.0))
            .collect()
    }
}

pub(crate) struct IncrementOutcome {
    pub eta: DeformationField,
    pub b: Vec<Vec2>,
    pub terms: Terms,
    pub report: MinimizeReport,
    pub feasibility: StepFeasibility,
}

/// Minimizes from `η_k` and runs the acceptance checks on the result.
pub(crate) fn solve_increment(inc: &Increment, grad_tol: f64, max_iters: usize) -> Result<IncrementOutcome, StopReason> {
    let s = inc.scheme;
    let grid = inc.eta_k.grid();
    let x0 = inc.eta_k.to_flat();
    let free: Vec<bool> = (0..grid.node_count()).flat_map(|k| [!grid.is_dirichlet(k); 2]).collect();
    let mut problem = MinimizeProblem::new(x0, free);
    problem.constraints = inc.constraints();
    problem.grad_tol = grad_tol;
    problem.max_iters = max_iters;
    problem.preconditioner = inc.preconditioner();
    let failure: RefCell<Option<FluidError>> = RefCell::new(None);
    let mut objective = |x: &[f64], g: &mut [f64]| match inc.terms(x, Some(g)) {
        Ok(t) => t.value,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let result = solve(&problem, &mut objective);
    if let Some(e) = failure.borrow_mut().take() {
        return Err(StopReason::Singular(e.to_string()));
    }
    let mut report = result.map_err(|e| match e {
        MinimizeError::LineSearchStall { iter } => StopReason::Stall(format!("line search stalled at iteration {iter}")),
        other => StopReason::Stall(other.to_string()),
    })?;
    let eta = DeformationField::from_flat(inc.eta_k.grid_arc().clone(), &report.argmin).expect("argmin length");
    let terms = inc.terms(&report.argmin, None).map_err(|e| StopReason::Singular(e.to_string()))?;
    let b = inc.velocity(&report.argmin);
    let t = &s.config.tolerances;
    let feasibility = StepFeasibility::assess(&eta, &s.container, t.subsamples, t.det_floor, t.contact_gap, t.cn_tol)
        .map_err(|e| StopReason::Collision(format!("{e}")))?;
    report.feasibility = Some(feasibility);
    match check_step_acceptance(&report) {
        Ok(()) => {}
        Err(Rejection::DetFloor { min_det }) => return Err(StopReason::DetFloor(min_det)),
        Err(r) => return Err(StopReason::Collision(format!("{r:?}"))),
    }
    Ok(IncrementOutcome { eta, b, terms, report, feasibility })
}
