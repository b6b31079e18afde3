//! Limited-memory quasi-Newton descent with barrier-aware backtracking.
//!
//! Infeasible trial points report `+∞` and are rejected by halving, so the
//! returned point always has a finite value no larger than the start value.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use thiserror::Error;

use crate::geometry::{
    boundary_clearance, ciarlet_necas_defect, cn_tolerance, evaluate_jets, ContainerBox, DeformationField,
    GeometryError,
};

pub const ARMIJO_C1: f64 = 1e-4;
pub const MAX_HALVINGS: usize = 60;

/// A smooth extended-valued objective.
pub trait Objective {
    /// Returns the value at `x` and, when finite, writes the gradient into `grad`.
    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Objective for F {
    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MinimizeError {
    #[error("objective is not finite at the initial point")]
    InfeasibleStart,
    #[error("line search found no finite trial point after {MAX_HALVINGS} halvings (iteration {iter})")]
    LineSearchStall { iter: usize },
    #[error("gradient has non-finite entries at iteration {iter}")]
    NonFiniteGradient { iter: usize },
    #[error("constraint row {0} has the wrong length or is linearly dependent")]
    BadConstraint(usize),
}

/// Fixed SPD approximation `H` of the Hessian; directions use `H⁻¹` as the
/// initial inverse-Hessian guess.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    factor: Arc<Cholesky<f64, Dyn>>,
}

impl Preconditioner {
    /// `None` if `h` is not positive definite.
    pub fn new(h: DMatrix<f64>) -> Option<Self> {
        Cholesky::new(h).map(|factor| Self { factor: Arc::new(factor) })
    }

    /// Factors `h + δI` for the smallest `δ` in a geometric ladder that
    /// makes it positive definite.
    pub fn shifted(h: DMatrix<f64>) -> Option<Self> {
        let n = h.nrows();
        let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        let mut delta = 0.0;
        for _ in 0..14 {
            let mut m = h.clone();
            for i in 0..n {
                m[(i, i)] += delta;
            }
            if let Some(p) = Self::new(m) {
                return Some(p);
            }
            delta = if delta == 0.0 { 1e-12 * scale } else { delta * 10.0 };
        }
        None
    }

    fn apply(&self, v: &mut [f64]) {
        let x = self.factor.solve(&DVector::from_column_slice(v));
        v.copy_from_slice(x.as_slice());
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeProblem {
    pub initial_point: Vec<f64>,
    /// Degrees of freedom that may move; the rest stay at their initial values.
    pub free: Vec<bool>,
    /// Linear equality constraints `c·(x − x0) = 0`.
    pub constraints: Vec<Vec<f64>>,
    /// Relative gradient tolerance; the absolute one is `grad_tol·(1 + |f(x0)|)`.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub memory: usize,
    /// Max-norm of the first trial displacement (unpreconditioned only).
    pub initial_step: f64,
    pub preconditioner: Option<Preconditioner>,
}

impl MinimizeProblem {
    pub fn new(initial_point: Vec<f64>, free: Vec<bool>) -> Self {
        Self {
            initial_point,
            free,
            constraints: Vec::new(),
            grad_tol: 1e-8,
            max_iters: 500,
            memory: 10,
            initial_step: 1e-2,
            preconditioner: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIters,
    /// No further decrease is representable in floating point.
    Stagnated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeReport {
    pub argmin: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub grad_norm: f64,
    pub grad_tol: f64,
    pub iters: usize,
    pub evaluations: usize,
    pub decrease: f64,
    pub termination: Termination,
    pub feasibility: Option<StepFeasibility>,
}

struct Projector {
    free: Vec<bool>,
    basis: Vec<Vec<f64>>,
}

impl Projector {
    fn new(free: &[bool], rows: &[Vec<f64>]) -> Result<Self, MinimizeError> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != free.len() {
                return Err(MinimizeError::BadConstraint(r));
            }
            let mut v: Vec<f64> = row.iter().zip(free).map(|(&c, &f)| if f { c } else { 0.0 }).collect();
            let scale = norm(&v);
            for _ in 0..2 {
                for q in &basis {
                    let d = dot(q, &v);
                    v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
                }
            }
            let n = norm(&v);
            if !(n > 1e-12 * scale) {
                if scale == 0.0 {
                    continue;
                }
                return Err(MinimizeError::BadConstraint(r));
            }
            v.iter_mut().for_each(|a| *a /= n);
            basis.push(v);
        }
        Ok(Self { free: free.to_vec(), basis })
    }

    fn apply(&self, v: &mut [f64]) {
        for (x, &f) in v.iter_mut().zip(&self.free) {
            if !f {
                *x = 0.0;
            }
        }
        for q in &self.basis {
            let d = dot(q, v);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn solve(problem: &MinimizeProblem, objective: &mut dyn Objective) -> Result<MinimizeReport, MinimizeError> {
    let n = problem.initial_point.len();
    let proj = Projector::new(&problem.free, &problem.constraints)?;
    let mut x = problem.initial_point.clone();
    let mut g = vec![0.0; n];
    let mut f = objective.evaluate(&x, &mut g);
    let mut evaluations = 1;
    if !f.is_finite() {
        return Err(MinimizeError::InfeasibleStart);
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(MinimizeError::NonFiniteGradient { iter: 0 });
    }
    proj.apply(&mut g);
    let f0 = f;
    let tol = problem.grad_tol * (1.0 + f0.abs());
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut termination = Termination::MaxIters;
    let mut iters = 0;
    let mut flat_steps = 0;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    while iters < problem.max_iters {
        let gnorm = norm(&g);
        if gnorm <= tol {
            termination = Termination::Converged;
            break;
        }
        let mut d = two_loop(&g, &history, problem.preconditioner.as_ref());
        proj.apply(&mut d);
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut alpha = if history.is_empty() && problem.preconditioner.is_none() {
            let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (problem.initial_step / dmax).min(1.0)
        } else {
            1.0
        };

        let mut accepted = false;
        let mut any_finite = false;
        for _ in 0..=MAX_HALVINGS {
            for i in 0..n {
                x_new[i] = x[i] + alpha * d[i];
            }
            let f_trial = objective.evaluate(&x_new, &mut g_new);
            evaluations += 1;
            if f_trial.is_finite() {
                any_finite = true;
                if f_trial <= f + ARMIJO_C1 * alpha * slope {
                    if g_new.iter().any(|v| !v.is_finite()) {
                        return Err(MinimizeError::NonFiniteGradient { iter: iters });
                    }
                    proj.apply(&mut g_new);
                    let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                    let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                    let sy = dot(&s, &y);
                    if sy > 1e-12 * norm(&s) * norm(&y) {
                        if history.len() == problem.memory {
                            history.pop_front();
                        }
                        history.push_back((s, y, 1.0 / sy));
                    }
                    flat_steps = if f - f_trial <= 1e-15 * (1.0 + f.abs()) { flat_steps + 1 } else { 0 };
                    std::mem::swap(&mut x, &mut x_new);
                    std::mem::swap(&mut g, &mut g_new);
                    f = f_trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        iters += 1;
        if !accepted {
            if !any_finite {
                return Err(MinimizeError::LineSearchStall { iter: iters });
            }
            if history.is_empty() {
                termination = Termination::Stagnated;
                break;
            }
            history.clear();
            continue;
        }
        if flat_steps >= 3 {
            termination = Termination::Stagnated;
            break;
        }
    }
    Ok(MinimizeReport {
        grad_norm: norm(&g),
        grad_tol: tol,
        argmin: x,
        value: f,
        initial_value: f0,
        iters,
        evaluations,
        decrease: f0 - f,
        termination,
        feasibility: None,
    })
}

fn two_loop(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, pre: Option<&Preconditioner>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(v, yi)| *v -= a * yi);
        alphas.push(a);
    }
    if let Some(p) = pre {
        p.apply(&mut q);
    } else if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(v, si)| *v += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Geometric admissibility data of an accepted candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepFeasibility {
    pub cn_defect: f64,
    pub cn_tol: f64,
    pub min_det: f64,
    pub det_floor: f64,
    pub self_distance: f64,
    pub wall_distance: f64,
    /// Clearance at or below which the boundary counts as in contact.
    pub contact_gap: f64,
}

impl StepFeasibility {
    pub fn assess(
        eta: &DeformationField,
        container: &ContainerBox,
        subsamples: usize,
        det_floor: f64,
        contact_gap: f64,
        cn_tol: Option<f64>,
    ) -> Result<Self, GeometryError> {
        let min_det = evaluate_jets(eta).iter().map(|j| j.det_f).fold(f64::INFINITY, f64::min);
        let cn_defect = ciarlet_necas_defect(eta, container, subsamples)?;
        let clearance = boundary_clearance(eta, container);
        Ok(Self {
            cn_defect,
            cn_tol: cn_tol.unwrap_or_else(|| cn_tolerance(eta, container, subsamples)),
            min_det,
            det_floor,
            self_distance: clearance.self_distance,
            wall_distance: clearance.wall_distance,
            contact_gap,
        })
    }

    pub fn clearance(&self) -> f64 {
        self.self_distance.min(self.wall_distance)
    }
}

/// Why a candidate step was refused.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rejection {
    Overlap { defect: f64, tol: f64 },
    DetFloor { min_det: f64 },
    Contact { distance: f64 },
    Unassessed,
}

/// Accepts a step iff the image is injective up to tolerance, the
/// determinant floor holds and the boundary is not in contact.
pub fn check_step_acceptance(report: &MinimizeReport) -> Result<(), Rejection> {
    let Some(f) = report.feasibility else {
        return Err(Rejection::Unassessed);
    };
    if !(f.cn_defect <= f.cn_tol) {
        return Err(Rejection::Overlap { defect: f.cn_defect, tol: f.cn_tol });
    }
    if !(f.min_det >= f.det_floor) {
        return Err(Rejection::DetFloor { min_det: f.min_det });
    }
    if !(f.clearance() > f.contact_gap) {
        return Err(Rejection::Contact { distance: f.clearance() });
    }
    Ok(())
}
