//! Time-stepping drivers: parabolic solid, parabolic FSI, and the
//! time-delayed (two time-scale) solid and FSI schemes.

mod config;
mod hyperbolic;
mod increment;
mod parabolic;

pub use config::{
    ContainerSpec, DirichletSide, ForceKind, ForceSpec, ForceTarget, InitialDeformation, InitialSpec, Mode,
    OutputSpec, SchemeConfig, SolidSpec, Tolerances,
};
pub use hyperbolic::{run_hyperbolic, run_time_delayed_epoch, EpochData, TdState};
pub use parabolic::{run_parabolic, step_parabolic_fsi, step_parabolic_solid, OperatorCache};

use std::collections::VecDeque;
use std::sync::Arc;

use thiserror::Error;

use crate::energetics::{energy, energy_gradient, MaterialParams, RegularizationParams, Regularizer};
use crate::flowmap::DetDrift;
use crate::fluid::{build_mask, CellKind, FluidGrid, GlobalVelocityField, StokesOperator, StokesParams};
use crate::geometry::{ContainerBox, DeformationField, GeometryError, ReferenceGrid, Vec2};
use crate::ledger::{telescoped_slacks, LedgerHeader, LedgerRow};
use crate::minimize::{solve, MinimizeProblem, Preconditioner, StepFeasibility, Termination};
use nalgebra::DMatrix;

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("invalid configuration: {}", format_violations(.0))]
    Validation(Vec<(String, String)>),
    #[error("initial state rejected: {0}")]
    InitialState(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn format_violations(v: &[(String, String)]) -> String {
    v.iter().map(|(f, m)| format!("{f}: {m}")).collect::<Vec<_>>().join("; ")
}

/// Why a run ended before `t_end`.
#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    /// Overlap, contact with the wall or self-contact.
    Collision(String),
    DetFloor(f64),
    /// Flow-map Jacobian left `[½, 2]`.
    DetDrift(f64),
    MarkerEscaped(String),
    Stall(String),
    Singular(String),
}

impl StopReason {
    pub fn name(&self) -> &'static str {
        match self {
            StopReason::Collision(_) => "collision",
            StopReason::DetFloor(_) => "det_floor",
            StopReason::DetDrift(_) => "det_drift",
            StopReason::MarkerEscaped(_) => "marker_escaped",
            StopReason::Stall(_) => "stall",
            StopReason::Singular(_) => "singular",
        }
    }
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopReason::Collision(s) => write!(f, "collision: {s}"),
            StopReason::DetFloor(d) => write!(f, "det floor reached: min det {d:e}"),
            StopReason::DetDrift(d) => write!(f, "flow map det left [1/2, 2]: {d}"),
            StopReason::MarkerEscaped(s) => write!(f, "marker escaped: {s}"),
            StopReason::Stall(s) => write!(f, "minimizer stalled: {s}"),
            StopReason::Singular(s) => write!(f, "fluid solve failed: {s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopRecord {
    pub reason: StopReason,
    /// Time of the refused step.
    pub t: f64,
    pub step: usize,
}

/// Solver and transfer diagnostics of one accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub grad_norm: f64,
    pub iters: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Coupling sweeps; the fluid is eliminated exactly, so always 1.
    pub sweeps: usize,
    /// Empirical Korn constant of the step (solid or global).
    pub korn: Option<f64>,
    /// Largest `|v(η_k(x)) − b(x)|` over traced boundary nodes.
    pub interface_mismatch: Option<f64>,
    /// Solid-side plus fluid-side momentum minus the Eulerian `∫ρu`.
    pub momentum_mismatch: Option<f64>,
    pub max_divergence: Option<f64>,
    pub feasibility: StepFeasibility,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub drift: Option<DetDrift>,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub header: LedgerHeader,
    pub rows: Vec<LedgerRow>,
    /// `(t, η)` at every ledger row.
    pub snapshots: Vec<(f64, Vec<Vec2>)>,
    /// Velocity fields at the output stride.
    pub fields: Vec<(usize, GlobalVelocityField)>,
    /// Marker rows `x0 y0 x y detJ` at the output stride.
    pub markers: Vec<(usize, Vec<[f64; 5]>)>,
    pub epochs: Vec<EpochSummary>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub stop: Option<StopRecord>,
    pub grid: Arc<ReferenceGrid>,
}

impl TrajectoryRecord {
    fn new(header: LedgerHeader, grid: Arc<ReferenceGrid>) -> Self {
        Self {
            header,
            rows: Vec::new(),
            snapshots: Vec::new(),
            fields: Vec::new(),
            markers: Vec::new(),
            epochs: Vec::new(),
            diagnostics: Vec::new(),
            stop: None,
            grid,
        }
    }

    fn push(&mut self, row: LedgerRow, eta: &DeformationField) {
        self.rows.push(row);
        self.snapshots.push((row.t, eta.positions().to_vec()));
    }

    fn finish(&mut self) {
        let s = telescoped_slacks(&self.header, &self.rows);
        for (r, v) in self.rows.iter_mut().zip(s) {
            r.slack_telescope = v;
        }
    }

    pub fn final_eta(&self) -> Option<&[Vec2]> {
        self.snapshots.last().map(|(_, p)| p.as_slice())
    }
}

/// Runtime data derived once from a [`SchemeConfig`].
pub struct Scheme {
    pub config: SchemeConfig,
    pub grid: Arc<ReferenceGrid>,
    pub container: ContainerBox,
    pub fluid_grid: FluidGrid,
    pub material: MaterialParams,
    /// Regularization with `h` set from the config.
    pub reg: RegularizationParams,
    pub regularizer: Regularizer,
    /// Lumped nodal masses.
    pub mass: Vec<f64>,
}

impl Scheme {
    pub fn new(config: &SchemeConfig) -> Result<Self, SchemeError> {
        let v = config.violations();
        if !v.is_empty() {
            return Err(SchemeError::Validation(v));
        }
        let s = &config.solid;
        let origin = Vec2::new(s.origin[0], s.origin[1]);
        let (nx, ny) = (s.nodes[0], s.nodes[1]);
        let nodes: Vec<usize> = match s.dirichlet {
            DirichletSide::Bottom => (0..nx).collect(),
            DirichletSide::Left => (0..ny).map(|j| j * nx).collect(),
        };
        let grid = Arc::new(ReferenceGrid::with_dirichlet(nx, ny, s.spacing, origin, &nodes, None)?);
        let c = &config.container;
        let container =
            ContainerBox::new(Vec2::new(c.min[0], c.min[1]), Vec2::new(c.max[0], c.max[1]), c.cells[0], c.cells[1])?;
        container.check_gamma(&grid)?;
        let mut reg = config.regularization;
        reg.h = config.h;
        Ok(Self {
            config: config.clone(),
            regularizer: Regularizer::new(&grid, reg.k0),
            mass: grid.lumped_mass(),
            fluid_grid: FluidGrid::new(container.clone()),
            container,
            grid,
            material: config.material,
            reg,
        })
    }

    pub fn stokes_params(&self, scale: f64, h_reg: f64) -> StokesParams {
        StokesParams {
            nu: self.material.nu,
            rho_f: self.material.rho_f,
            h_reg,
            k0: self.reg.k0,
            scale,
            lin_tol: self.config.tolerances.lin_tol,
        }
    }

    /// `E_h` when `regularized`, else `E`.
    pub fn energy(&self, eta: &DeformationField, regularized: bool) -> f64 {
        let e = energy(eta, &self.material);
        if regularized && e.is_finite() {
            e + self.reg.h.powf(self.reg.a0) * self.regularizer.norm_sq(eta.positions())
        } else {
            e
        }
    }

    /// `ρ_s M f(t, η_k(x))` averaged over `[t0, t1]`, per node.
    pub fn nodal_force(&self, eta_k: &DeformationField, t0: f64, t1: f64) -> Vec<Vec2> {
        let f = &self.config.force;
        if !f.acts_on_solid() {
            return vec![Vec2::zeros(); eta_k.positions().len()];
        }
        let ramp = f.ramp_average(t0, t1);
        eta_k
            .positions()
            .iter()
            .zip(&self.mass)
            .map(|(p, m)| f.profile(*p) * (ramp * self.material.rho_s * m))
            .collect()
    }

    /// The Eulerian fluid force averaged over `[t0, t1]`, if any.
    pub fn fluid_force(&self, t0: f64, t1: f64) -> Option<Box<dyn Fn(Vec2) -> Vec2>> {
        let f = self.config.force.clone();
        if !f.acts_on_fluid() {
            return None;
        }
        let ramp = f.ramp_average(t0, t1);
        Some(Box::new(move |x| f.profile(x) * ramp))
    }

    /// Initial solid velocity, zero on Dirichlet nodes.
    pub fn initial_solid_velocity(&self) -> Vec<Vec2> {
        let v = self.config.initial.solid_velocity;
        (0..self.grid.node_count())
            .map(|k| if self.grid.is_dirichlet(k) { Vec2::zeros() } else { Vec2::new(v[0], v[1]) })
            .collect()
    }

    pub fn kinetic(&self, b: &[Vec2]) -> f64 {
        0.5 * self.material.rho_s * b.iter().zip(&self.mass).map(|(v, m)| m * v.norm_squared()).sum::<f64>()
    }

    /// Initial deformation per the config, checked for feasibility.
    pub fn initial_deformation(&self) -> Result<DeformationField, SchemeError> {
        let eta = DeformationField::identity(self.grid.clone());
        let eta = match self.config.initial.deformation {
            InitialDeformation::Identity => eta,
            InitialDeformation::Relaxed => self.relax(eta)?,
        };
        let t = &self.config.tolerances;
        let f = StepFeasibility::assess(&eta, &self.container, t.subsamples, t.det_floor, t.contact_gap, t.cn_tol)?;
        if !(f.cn_defect <= f.cn_tol) {
            return Err(SchemeError::InitialState(format!("CN defect {} exceeds {}", f.cn_defect, f.cn_tol)));
        }
        if !self.energy(&eta, self.config.mode.is_hyperbolic()).is_finite() {
            return Err(SchemeError::InitialState("energy is infinite".into()));
        }
        Ok(eta)
    }

    /// Critical point of the mode's energy, under flux compatibility in FSI modes.
    fn relax(&self, mut eta: DeformationField) -> Result<DeformationField, SchemeError> {
        let regularized = self.config.mode.is_hyperbolic();
        let grid = self.grid.clone();
        let free: Vec<bool> = (0..grid.node_count()).flat_map(|k| [!grid.is_dirichlet(k); 2]).collect();
        let gradient = |x: &[f64], g: &mut [f64]| {
            let e = DeformationField::from_flat(grid.clone(), x).expect("length");
            let value = self.energy(&e, regularized);
            if !value.is_finite() {
                return value;
            }
            let mut d = energy_gradient(&e, &self.material).expect("finite energy");
            if regularized {
                self.regularizer.add_gradient(e.positions(), self.reg.h.powf(self.reg.a0), &mut d);
            }
            for (i, v) in d.iter().enumerate() {
                g[2 * i] = v.x;
                g[2 * i + 1] = v.y;
            }
            value
        };
        for _ in 0..10 {
            let mut problem = MinimizeProblem::new(eta.to_flat(), free.clone());
            problem.grad_tol = 1e-11;
            problem.max_iters = 20_000;
            problem.preconditioner = fd_hessian(&gradient, &problem.initial_point, &free).and_then(Preconditioner::shifted);
            if self.config.mode.has_fluid() {
                let mask = build_mask(&eta, &self.fluid_grid, self.config.tolerances.subsamples)?;
                let op = StokesOperator::new(&mask, self.stokes_params(1.0, 0.0), None, None)
                    .map_err(|e| SchemeError::InitialState(e.to_string()))?;
                let n = grid.node_count();
                problem.constraints = op
                    .flux_rows()
                    .iter()
                    .map(|row| mask.trace_adjoint(row, n).iter().flat_map(|v| [v.x, v.y]).collect::<Vec<f64>>())
                    .filter(|v| v.iter().any(|a| *a != 0.0))
                    .collect();
            }
            let mut objective = |x: &[f64], g: &mut [f64]| gradient(x, g);
            let report = solve(&problem, &mut objective).map_err(|e| SchemeError::InitialState(e.to_string()))?;
            let change = report.argmin.iter().zip(&problem.initial_point).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            eta = DeformationField::from_flat(grid.clone(), &report.argmin)?;
            if change < 1e-13 {
                break;
            }
        }
        Ok(eta)
    }

    fn header(&self, ineq_scale: f64) -> LedgerHeader {
        LedgerHeader {
            mode: self.config.mode.name().to_string(),
            tau: self.config.tau,
            h: self.config.h,
            window: self.config.window(),
            ineq_tol: self.config.tolerances.ineq_tol * (1.0 + ineq_scale.abs()),
        }
    }
}

/// Central-difference Hessian of a gradient map on the free coordinates,
/// symmetrized, identity on fixed ones.
fn fd_hessian(gradient: &dyn Fn(&[f64], &mut [f64]) -> f64, x: &[f64], free: &[bool]) -> Option<DMatrix<f64>> {
    let n = x.len();
    let eps = 1e-6;
    let mut h = DMatrix::zeros(n, n);
    let (mut gp, mut gm) = (vec![0.0; n], vec![0.0; n]);
    let mut y = x.to_vec();
    for j in 0..n {
        if !free[j] {
            h[(j, j)] = 1.0;
            continue;
        }
        y[j] = x[j] + eps;
        let fp = gradient(&y, &mut gp);
        y[j] = x[j] - eps;
        let fm = gradient(&y, &mut gm);
        y[j] = x[j];
        if !(fp.is_finite() && fm.is_finite()) {
            return None;
        }
        for i in 0..n {
            if free[i] {
                h[(i, j)] = (gp[i] - gm[i]) / (2.0 * eps);
            }
        }
    }
    Some((&h + h.transpose()) * 0.5)
}

fn initial_row(e: f64, e_h: f64, kin_s: f64, kin_f: f64, f: &StepFeasibility) -> LedgerRow {
    LedgerRow {
        step: 0,
        t: 0.0,
        e,
        e_h,
        r_step: 0.0,
        fluid_diss: 0.0,
        kin_avg_solid: kin_s,
        kin_avg_fluid: kin_f,
        work_f: 0.0,
        slack_single: 0.0,
        slack_telescope: 0.0,
        cn_defect: f.cn_defect,
        min_det_eta: f.min_det,
        max_det_j_drift: 0.0,
        self_distance: f.clearance(),
    }
}

/// Transfer diagnostics comparing the Lagrangian solid with the Eulerian field.
fn transfer_diagnostics(
    scheme: &Scheme,
    eta_k: &DeformationField,
    b: &[Vec2],
    v: &GlobalVelocityField,
) -> (f64, f64) {
    let grid = eta_k.grid();
    let mismatch = grid
        .traced_nodes()
        .iter()
        .map(|&n| (v.velocity_at(eta_k.positions()[n]) - b[n]).norm())
        .fold(0.0, f64::max);
    let m = &scheme.material;
    let solid: Vec2 = b.iter().zip(&scheme.mass).fold(Vec2::zeros(), |acc, (v, w)| acc + v * (m.rho_s * w));
    let g = &v.grid;
    let area = g.dx() * g.dy();
    let (mut fluid, mut global) = (Vec2::zeros(), Vec2::zeros());
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let c = g.cell(i, j);
            let u = v.velocity_at(g.container.cell_center(i, j)) * area;
            match v.kinds[c] {
                CellKind::Fluid => {
                    fluid += u * m.rho_f;
                    global += u * m.rho_f;
                }
                CellKind::Solid => global += u * m.rho_s,
                CellKind::Wall => {}
            }
        }
    }
    (mismatch, (solid + fluid - global).norm())
}

/// Runs the configured scheme to `t_end` or the first stop.
pub fn run(config: &SchemeConfig) -> Result<TrajectoryRecord, SchemeError> {
    let scheme = Scheme::new(config)?;
    let eta0 = scheme.initial_deformation()?;
    if config.mode.is_hyperbolic() {
        run_hyperbolic(&scheme, eta0)
    } else {
        run_parabolic(&scheme, eta0)
    }
}

fn window_mean(w: &VecDeque<f64>) -> f64 {
    w.iter().sum::<f64>() / w.len() as f64
}
