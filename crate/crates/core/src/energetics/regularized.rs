use super::{dissipation, dissipation_gradient, energy, energy_gradient, EnergeticsError, MaterialParams, RegularizationParams};
use crate::geometry::{difference_stencils, DeformationField, LatticeStencil, ReferenceGrid, Vec2};

/// Discrete `‖∇^{k0} u‖²` on the solid node lattice.
#[derive(Debug, Clone)]
pub struct Regularizer {
    nx: usize,
    stencils: Vec<LatticeStencil>,
}

impl Regularizer {
    pub fn new(grid: &ReferenceGrid, k0: usize) -> Self {
        let h = grid.spacing();
        Self { nx: grid.nx(), stencils: difference_stencils(grid.nx(), grid.ny(), h, h, k0) }
    }

    pub fn norm_sq(&self, u: &[Vec2]) -> f64 {
        self.stencils
            .iter()
            .map(|s| {
                let d = s.taps.iter().fold(Vec2::zeros(), |acc, &(i, j, w)| acc + u[j * self.nx + i] * w);
                s.weight * d.norm_squared()
            })
            .sum()
    }

    /// Adds `scale · D(‖∇^{k0} u‖²)` to `out`.
    pub fn add_gradient(&self, u: &[Vec2], scale: f64, out: &mut [Vec2]) {
        for s in &self.stencils {
            let d = s.taps.iter().fold(Vec2::zeros(), |acc, &(i, j, w)| acc + u[j * self.nx + i] * w);
            let g = d * (2.0 * scale * s.weight);
            for &(i, j, w) in &s.taps {
                out[j * self.nx + i] += g * w;
            }
        }
    }
}

fn zero_dirichlet(grid: &ReferenceGrid, v: &mut [Vec2]) {
    for (k, x) in v.iter_mut().enumerate() {
        if grid.is_dirichlet(k) {
            *x = Vec2::zeros();
        }
    }
}

/// `E_h(η) = E(η) + h^{a0}‖∇^{k0}η‖²`.
pub fn regularized_energy(eta: &DeformationField, p: &MaterialParams, reg: &RegularizationParams) -> f64 {
    let e = energy(eta, p);
    if reg.h == 0.0 || !e.is_finite() {
        return e;
    }
    e + reg.h.powf(reg.a0) * Regularizer::new(eta.grid(), reg.k0).norm_sq(eta.positions())
}

pub fn regularized_energy_gradient(
    eta: &DeformationField,
    p: &MaterialParams,
    reg: &RegularizationParams,
) -> Result<Vec<Vec2>, EnergeticsError> {
    let mut g = energy_gradient(eta, p)?;
    if reg.h != 0.0 {
        Regularizer::new(eta.grid(), reg.k0).add_gradient(eta.positions(), reg.h.powf(reg.a0), &mut g);
        zero_dirichlet(eta.grid(), &mut g);
    }
    Ok(g)
}

/// `R_h(η, b) = R(η, b) + h‖∇^{k0}b‖²`.
pub fn regularized_dissipation(eta: &DeformationField, b: &[Vec2], p: &MaterialParams, reg: &RegularizationParams) -> f64 {
    let r = dissipation(eta, b, p);
    if reg.h == 0.0 {
        return r;
    }
    r + reg.h * Regularizer::new(eta.grid(), reg.k0).norm_sq(b)
}

pub fn regularized_dissipation_gradient(
    eta: &DeformationField,
    b: &[Vec2],
    p: &MaterialParams,
    reg: &RegularizationParams,
) -> Vec<Vec2> {
    let mut g = dissipation_gradient(eta, b, p);
    if reg.h != 0.0 {
        Regularizer::new(eta.grid(), reg.k0).add_gradient(b, reg.h, &mut g);
        zero_dirichlet(eta.grid(), &mut g);
    }
    g
}
