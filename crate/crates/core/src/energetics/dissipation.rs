use super::MaterialParams;
use crate::geometry::jets::{cell_gradient, scatter_gradient};
use crate::geometry::{DeformationField, Mat2, ReferenceGrid, Vec2};

fn rate(f: &Mat2, grad_b: &Mat2) -> Mat2 {
    grad_b.transpose() * f + f.transpose() * grad_b
}

/// `∫ |∇bᵀ∇η + ∇ηᵀ∇b|²` by the midpoint rule.
pub fn dissipation(eta: &DeformationField, b: &[Vec2], _p: &MaterialParams) -> f64 {
    let grid = eta.grid();
    let h2 = grid.spacing().powi(2);
    (0..grid.cell_count())
        .map(|c| {
            let f = cell_gradient(grid, c, eta.positions());
            h2 * rate(&f, &cell_gradient(grid, c, b)).norm_squared()
        })
        .sum()
}

/// Co-vector of `D₂R(η, b)`; zero on Dirichlet nodes.
pub fn dissipation_gradient(eta: &DeformationField, b: &[Vec2], _p: &MaterialParams) -> Vec<Vec2> {
    let grid = eta.grid();
    let h2 = grid.spacing().powi(2);
    let mut out = vec![Vec2::zeros(); grid.node_count()];
    for c in 0..grid.cell_count() {
        let f = cell_gradient(grid, c, eta.positions());
        let e = rate(&f, &cell_gradient(grid, c, b));
        scatter_gradient(grid, c, &(f * e * (4.0 * h2)), &mut out);
    }
    for (k, v) in out.iter_mut().enumerate() {
        if grid.is_dirichlet(k) {
            *v = Vec2::zeros();
        }
    }
    out
}

/// Discrete `‖b‖²_{W^{1,2}}` with cell-averaged values and cell gradients.
pub fn w12_norm_sq(grid: &ReferenceGrid, b: &[Vec2]) -> f64 {
    let h2 = grid.spacing().powi(2);
    (0..grid.cell_count())
        .map(|c| {
            let mean = grid.cell_corners(c).iter().fold(Vec2::zeros(), |m, &n| m + b[n]) * 0.25;
            h2 * (mean.norm_squared() + cell_gradient(grid, c, b).norm_squared())
        })
        .sum()
}

/// Empirical Korn constant `R(η, b) / ‖b‖²_{W^{1,2}}`; `None` for `b = 0`.
pub fn korn_witness(eta: &DeformationField, b: &[Vec2], p: &MaterialParams) -> Option<f64> {
    let n = w12_norm_sq(eta.grid(), b);
    (n > 0.0).then(|| dissipation(eta, b, p) / n)
}
