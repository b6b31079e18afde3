use std::collections::VecDeque;

use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use super::csr::Csr;
use super::field::GlobalVelocityField;
use super::forms::{evaluate, hessian_triplets, regularizer_samples, strain_samples, Sample};
use super::grid::{CellKind, SolidMask};
use super::FluidError;
use crate::geometry::Vec2;

/// Coefficients of the fluid incremental objective
/// `scale·(ν/2‖εv‖² + h_reg/2‖∇^{k0}v‖² − ⟨ρ_f f, v⟩)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesParams {
    pub nu: f64,
    pub rho_f: f64,
    pub h_reg: f64,
    pub k0: usize,
    pub scale: f64,
    /// Relative residual accepted from the saddle-point solve.
    pub lin_tol: f64,
}

impl Default for StokesParams {
    fn default() -> Self {
        Self { nu: 1.0, rho_f: 1.0, h_reg: 0.0, k0: 3, scale: 1.0, lin_tol: 1e-10 }
    }
}

/// Additional quadratic terms `½uᵀHu − cᵀu + constant` over all faces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadraticExtras {
    pub triplets: Vec<(usize, usize, f64)>,
    pub linear: Vec<(usize, f64)>,
    pub constant: f64,
}

/// Masked Stokes problem factored for a fixed geometry.
///
/// Free faces are those between two fluid cells. Solid faces carry
/// prescribed data, every other face is held at zero.
pub struct StokesOperator {
    mask: SolidMask,
    params: StokesParams,
    free_faces: Vec<usize>,
    free_slot: Vec<usize>,
    solid_slot: Vec<usize>,
    strain: Vec<Sample>,
    regularizer: Vec<Sample>,
    hessian: Csr,
    linear: Vec<f64>,
    extra_linear: Vec<f64>,
    constant: f64,
    rows: Vec<Vec<(usize, f64)>>,
    row_cell: Vec<usize>,
    kept: Vec<Option<usize>>,
    components: Vec<Vec<usize>>,
    kkt: Csr,
    lu: Lu<usize, f64>,
}

/// Result of one solve for given solid trace values.
#[derive(Debug, Clone)]
pub struct StokesSolution {
    pub field: GlobalVelocityField,
    /// Objective value including extras.
    pub value: f64,
    /// Derivative of the reduced objective with respect to the solid trace values.
    pub trace_gradient: Vec<f64>,
    /// Relative KKT residual after refinement.
    pub residual: f64,
}

const NONE: usize = usize::MAX;

impl StokesOperator {
    pub fn new(
        mask: &SolidMask,
        params: StokesParams,
        force: Option<&dyn Fn(Vec2) -> Vec2>,
        extras: Option<&QuadraticExtras>,
    ) -> Result<Self, FluidError> {
        let grid = &mask.grid;
        let kinds = &mask.kinds;
        if mask.count(CellKind::Fluid) == 0 {
            return Err(FluidError::SingularSystem("no fluid cells".into()));
        }
        let nf_all = grid.n_faces();
        let mut free_slot = vec![NONE; nf_all];
        let mut free_faces = Vec::new();
        for f in 0..nf_all {
            if mask.is_free(f) {
                free_slot[f] = free_faces.len();
                free_faces.push(f);
            }
        }
        let mut solid_slot = vec![NONE; nf_all];
        for (k, sf) in mask.solid_faces.iter().enumerate() {
            solid_slot[sf.face] = k;
        }

        let strain = strain_samples(grid, |c| kinds[c] == CellKind::Fluid);
        let regularizer =
            if params.h_reg > 0.0 { regularizer_samples(grid, kinds, params.k0) } else { Vec::new() };
        let mut trips = Vec::new();
        hessian_triplets(&strain, 0.5 * params.scale * params.nu, &mut trips);
        hessian_triplets(&regularizer, 0.5 * params.scale * params.h_reg, &mut trips);
        let mut extra_linear = vec![0.0; nf_all];
        let mut constant = 0.0;
        if let Some(x) = extras {
            trips.extend_from_slice(&x.triplets);
            for &(f, c) in &x.linear {
                extra_linear[f] += c;
            }
            constant += x.constant;
        }
        let linear = force_linear(mask, &params, force, &extra_linear);
        let hessian = Csr::from_triplets(nf_all, trips);

        // incompressibility rows in flux form, one per fluid cell
        let (dx, dy) = (grid.dx(), grid.dy());
        let mut rows = Vec::new();
        let mut row_cell = Vec::new();
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let c = grid.cell(i, j);
                if kinds[c] != CellKind::Fluid {
                    continue;
                }
                let [l, r, b, t] = grid.cell_faces(i, j);
                rows.push(vec![(l, -dy), (r, dy), (b, -dx), (t, dx)]);
                row_cell.push(c);
            }
        }
        let components = fluid_components(mask, &free_slot);
        let mut cell_row = vec![NONE; grid.cell_count()];
        for (r, &c) in row_cell.iter().enumerate() {
            cell_row[c] = r;
        }
        // one row per component is implied by the others and dropped
        let mut kept = vec![None; rows.len()];
        let gauges: Vec<usize> = components.iter().map(|comp| cell_row[comp[0]]).collect();
        let mut next = free_faces.len();
        for r in 0..rows.len() {
            if !gauges.contains(&r) {
                kept[r] = Some(next);
                next += 1;
            }
        }
        let n = next;
        let mut kt = Vec::new();
        for (a, &fa) in free_faces.iter().enumerate() {
            for (fb, v) in hessian.row(fa) {
                if free_slot[fb] != NONE {
                    kt.push((a, free_slot[fb], v));
                }
            }
        }
        for (r, row) in rows.iter().enumerate() {
            let Some(kr) = kept[r] else { continue };
            for &(f, v) in row {
                if free_slot[f] != NONE {
                    kt.push((kr, free_slot[f], v));
                    kt.push((free_slot[f], kr, v));
                }
            }
        }
        let kkt = Csr::from_triplets(n, kt);
        let faer_trips: Vec<Triplet<usize, usize, f64>> =
            kkt.triplets().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &faer_trips)
            .map_err(|e| FluidError::SingularSystem(format!("assembly: {e:?}")))?;
        let lu = mat.sp_lu().map_err(|e| FluidError::SingularSystem(format!("factorization: {e:?}")))?;

        Ok(Self {
            mask: mask.clone(),
            params,
            free_faces,
            free_slot,
            solid_slot,
            strain,
            regularizer,
            hessian,
            linear,
            extra_linear,
            constant,
            rows,
            row_cell,
            kept,
            components,
            kkt,
            lu,
        })
    }

    pub fn mask(&self) -> &SolidMask {
        &self.mask
    }
    pub fn params(&self) -> &StokesParams {
        &self.params
    }
    pub fn free_count(&self) -> usize {
        self.free_faces.len()
    }
    /// Cells of each connected fluid region.
    pub fn components(&self) -> &[Vec<usize>] {
        &self.components
    }

    /// `ν/2‖εu‖²` over the fluid cells.
    pub fn strain_dissipation(&self, u: &[f64]) -> f64 {
        0.5 * self.params.nu * evaluate(&self.strain, u)
    }

    /// `h_reg/2‖∇^{k0}u‖²` over fluid stencils.
    pub fn regularizer_dissipation(&self, u: &[f64]) -> f64 {
        0.5 * self.params.h_reg * evaluate(&self.regularizer, u)
    }

    /// Replaces the body force without refactoring.
    pub fn set_force(&mut self, force: Option<&dyn Fn(Vec2) -> Vec2>) {
        self.linear = force_linear(&self.mask, &self.params, force, &self.extra_linear);
    }

    /// Swaps in a mask with identical cell kinds, keeping the factorization.
    /// Returns `false` (and changes nothing) when the kinds differ.
    pub fn rebind(&mut self, mask: &SolidMask) -> bool {
        if mask.kinds != self.mask.kinds || mask.grid != self.mask.grid {
            return false;
        }
        self.mask = mask.clone();
        true
    }

    /// `ρ_f⟨f, u⟩` for the body force alone, without the scale factor.
    pub fn force_pairing(&self, u: &[f64]) -> f64 {
        self.linear.iter().zip(&self.extra_linear).zip(u).map(|((a, b), x)| (a - b) * x).sum::<f64>() / self.params.scale
    }

    /// The linear coefficient vector `c` (force and extras).
    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    /// Net outflux of each fluid component as a linear function of the
    /// solid trace values. Data is compatible iff every row pairs to zero.
    pub fn flux_rows(&self) -> Vec<Vec<f64>> {
        let ns = self.mask.solid_faces.len();
        let mut comp_of = vec![NONE; self.mask.grid.cell_count()];
        for (k, comp) in self.components.iter().enumerate() {
            for &c in comp {
                comp_of[c] = k;
            }
        }
        let mut out = vec![vec![0.0; ns]; self.components.len()];
        for (r, row) in self.rows.iter().enumerate() {
            let k = comp_of[self.row_cell[r]];
            for &(f, v) in row {
                if self.solid_slot[f] != NONE {
                    out[k][self.solid_slot[f]] += v;
                }
            }
        }
        out
    }

    /// Largest relative flux incompatibility of the data `g`.
    pub fn flux_defect(&self, g: &[f64]) -> f64 {
        let scale = self.mask.grid.dx() * g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        self.flux_rows()
            .iter()
            .map(|row| row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>().abs() / scale)
            .fold(0.0, f64::max)
    }

    pub fn solve(&self, g: &[f64]) -> Result<StokesSolution, FluidError> {
        let grid = &self.mask.grid;
        let nf_all = grid.n_faces();
        let n = self.kkt.n;
        let mut u = vec![0.0; nf_all];
        for (sf, &val) in self.mask.solid_faces.iter().zip(g) {
            u[sf.face] = val;
        }
        let hp = self.hessian.mul(&u);
        let mut rhs = vec![0.0; n];
        for (a, &f) in self.free_faces.iter().enumerate() {
            rhs[a] = self.linear[f] - hp[f];
        }
        for (r, row) in self.rows.iter().enumerate() {
            if let Some(kr) = self.kept[r] {
                rhs[kr] = -row.iter().filter(|t| self.free_slot[t.0] == NONE).map(|&(f, v)| v * u[f]).sum::<f64>();
            }
        }
        let rhs_norm = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut x = vec![0.0; n];
        let mut residual = rhs.clone();
        let mut rel = if rhs_norm > 0.0 { 1.0 } else { 0.0 };
        for _ in 0..4 {
            if rel <= self.params.lin_tol {
                break;
            }
            let b = Mat::from_fn(n, 1, |i, _| residual[i]);
            let dx = self.lu.solve(&b);
            for i in 0..n {
                x[i] += dx[(i, 0)];
            }
            let kx = self.kkt.mul(&x);
            for i in 0..n {
                residual[i] = rhs[i] - kx[i];
            }
            rel = residual.iter().fold(0.0f64, |m, v| m.max(v.abs())) / rhs_norm;
            if !rel.is_finite() {
                break;
            }
        }
        if !(rel <= self.params.lin_tol) {
            return Err(FluidError::SingularSystem(format!("saddle-point residual {rel:e}")));
        }
        for (a, &f) in self.free_faces.iter().enumerate() {
            u[f] = x[a];
        }
        let mut lambda = vec![0.0; self.rows.len()];
        for (r, k) in self.kept.iter().enumerate() {
            if let Some(k) = k {
                lambda[r] = x[*k];
            }
        }
        let hu = self.hessian.mul(&u);
        let value = 0.5 * u.iter().zip(&hu).map(|(a, b)| a * b).sum::<f64>()
            - u.iter().zip(&self.linear).map(|(a, b)| a * b).sum::<f64>()
            + self.constant;
        let mut face_grad: Vec<f64> = hu.iter().zip(&self.linear).map(|(a, b)| a - b).collect();
        for (r, row) in self.rows.iter().enumerate() {
            for &(f, v) in row {
                face_grad[f] += v * lambda[r];
            }
        }
        let trace_gradient = self.mask.solid_faces.iter().map(|sf| face_grad[sf.face]).collect();

        // physical pressure is −λ/scale, normalised to zero mean per component
        let mut pressure = vec![0.0; grid.cell_count()];
        for (r, &c) in self.row_cell.iter().enumerate() {
            pressure[c] = -lambda[r] / self.params.scale;
        }
        for comp in &self.components {
            let mean = comp.iter().map(|&c| pressure[c]).sum::<f64>() / comp.len() as f64;
            for &c in comp {
                pressure[c] -= mean;
            }
        }
        let field = GlobalVelocityField::new(grid.clone(), u, self.mask.kinds.clone(), pressure);
        Ok(StokesSolution { field, value, trace_gradient, residual: rel })
    }
}

fn force_linear(
    mask: &SolidMask,
    params: &StokesParams,
    force: Option<&dyn Fn(Vec2) -> Vec2>,
    extra: &[f64],
) -> Vec<f64> {
    let grid = &mask.grid;
    let mut linear = extra.to_vec();
    if let Some(f) = force {
        let half = 0.5 * grid.dx() * grid.dy();
        for (face, c) in linear.iter_mut().enumerate() {
            let n = grid.face_cells(face).iter().flatten().filter(|&&c| mask.kinds[c] == CellKind::Fluid).count();
            if n > 0 {
                let comp = if grid.is_u(face) { 0 } else { 1 };
                *c += params.scale * params.rho_f * f(grid.face_position(face))[comp] * half * n as f64;
            }
        }
    }
    linear
}

fn fluid_components(mask: &SolidMask, free_slot: &[usize]) -> Vec<Vec<usize>> {
    let grid = &mask.grid;
    let mut seen = vec![false; grid.cell_count()];
    let mut out = Vec::new();
    for start in 0..grid.cell_count() {
        if seen[start] || mask.kinds[start] != CellKind::Fluid {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(c) = queue.pop_front() {
            comp.push(c);
            let (i, j) = (c % grid.nx(), c / grid.nx());
            for f in grid.cell_faces(i, j) {
                if free_slot[f] == NONE {
                    continue;
                }
                for d in grid.face_cells(f).into_iter().flatten() {
                    if !seen[d] {
                        seen[d] = true;
                        queue.push_back(d);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Minimizer of the masked Stokes objective for given solid trace values.
pub fn stokes_solve(
    mask: &SolidMask,
    boundary_data: &[f64],
    force: Option<&dyn Fn(Vec2) -> Vec2>,
    params: StokesParams,
) -> Result<GlobalVelocityField, FluidError> {
    let op = StokesOperator::new(mask, params, force, None)?;
    let defect = op.flux_defect(boundary_data);
    if defect > 1e-9 {
        return Err(FluidError::IncompatibleFlux(defect));
    }
    Ok(op.solve(boundary_data)?.field)
}
