use super::forms::{evaluate, gradient_samples, strain_samples};
use super::grid::CellKind;
use super::GlobalVelocityField;
use crate::energetics::{dissipation, MaterialParams};
use crate::geometry::{DeformationField, Vec2};

/// Both sides of the global Korn inequality for one global field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KornReport {
    /// `‖u‖²_{W^{1,2}}` over the whole container.
    pub korn_lhs: f64,
    /// `ν/2‖εu‖²` on the fluid plus `R(η, b)`.
    pub korn_rhs: f64,
}

impl KornReport {
    /// Empirical constant `c` with `c·lhs = rhs`; `None` when `u = 0`.
    pub fn constant(&self) -> Option<f64> {
        (self.korn_lhs > 0.0).then(|| self.korn_rhs / self.korn_lhs)
    }
}

pub fn global_korn_report(u: &GlobalVelocityField, eta: &DeformationField, b: &[Vec2], params: &MaterialParams) -> KornReport {
    let g = &u.grid;
    let lhs = u.l2_norm_sq() + evaluate(&gradient_samples(g), &u.faces);
    let strain = strain_samples(g, |c| u.kinds[c] == CellKind::Fluid);
    let rhs = 0.5 * params.nu * evaluate(&strain, &u.faces) + dissipation(eta, b, params);
    KornReport { korn_lhs: lhs, korn_rhs: rhs }
}
