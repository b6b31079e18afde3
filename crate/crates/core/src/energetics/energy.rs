use super::{EnergeticsError, MaterialParams};
use crate::geometry::jets::{scatter_gradient, scatter_hessian};
use crate::geometry::{evaluate_jets, DeformationField, JetSample, Mat2, Vec2};

/// Energy density at one quadrature point; `+∞` when `det F ≤ 0`.
pub fn energy_density(jet: &JetSample, p: &MaterialParams) -> f64 {
    if !(jet.det_f > 0.0) {
        return f64::INFINITY;
    }
    let a = jet.f.transpose() * jet.f - Mat2::identity();
    let tr = a.trace();
    let svk = p.w_svk * (p.lam * tr * tr + 2.0 * p.mu * a.norm_squared());
    let barrier = p.w_bar * jet.det_f.powf(-p.a);
    let reg = p.w_reg * jet.g_norm_sq().powf(0.5 * p.q);
    svk + barrier + reg
}

pub fn energy(eta: &DeformationField, p: &MaterialParams) -> f64 {
    let h2 = eta.grid().spacing().powi(2);
    let mut total = 0.0;
    for jet in evaluate_jets(eta) {
        let e = energy_density(&jet, p);
        if !e.is_finite() {
            return f64::INFINITY;
        }
        total += h2 * e;
    }
    total
}

/// Nodal co-vector of `DE(η)`; entries on Dirichlet nodes are zero.
pub fn energy_gradient(eta: &DeformationField, p: &MaterialParams) -> Result<Vec<Vec2>, EnergeticsError> {
    let grid = eta.grid();
    let h2 = grid.spacing().powi(2);
    let mut out = vec![Vec2::zeros(); grid.node_count()];
    for (c, jet) in evaluate_jets(eta).iter().enumerate() {
        if !(jet.det_f > 0.0) {
            return Err(EnergeticsError::Infeasible { cell: c, min_det: jet.det_f });
        }
        let f = jet.f;
        let a = f.transpose() * f - Mat2::identity();
        let s = Mat2::identity() * (p.lam * a.trace()) + a * (2.0 * p.mu);
        let dpsi_df = f * s * (4.0 * p.w_svk) - jet.cof_f * (p.a * p.w_bar * jet.det_f.powf(-p.a - 1.0));
        scatter_gradient(grid, c, &(dpsi_df * h2), &mut out);
        let gn2 = jet.g_norm_sq();
        if gn2 > 0.0 {
            let scale = h2 * p.w_reg * p.q * gn2.powf(0.5 * p.q - 1.0);
            scatter_hessian(grid, c, &[jet.g[0] * scale, jet.g[1] * scale], &mut out);
        }
    }
    for (k, v) in out.iter_mut().enumerate() {
        if grid.is_dirichlet(k) {
            *v = Vec2::zeros();
        }
    }
    Ok(out)
}
