#![allow(dead_code)]

pub mod tiny;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varistep::geometry::{ContainerBox, DeformationField, ReferenceGrid, Vec2};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit square grid with `n` nodes per side, bottom edge clamped.
pub fn unit_grid(n: usize, origin: Vec2) -> Arc<ReferenceGrid> {
    Arc::new(ReferenceGrid::new(n, n, 1.0 / (n - 1) as f64, origin).unwrap())
}

pub fn default_container() -> ContainerBox {
    ContainerBox::new(Vec2::zeros(), Vec2::new(3.0, 2.0), 96, 64).unwrap()
}

/// Identity plus bounded nodal noise on free nodes, then a mild affine stretch.
pub fn random_feasible(grid: &Arc<ReferenceGrid>, amp: f64, r: &mut ChaCha8Rng) -> DeformationField {
    let mut eta = DeformationField::identity(grid.clone());
    let h = grid.spacing();
    for (k, p) in eta.positions_mut().iter_mut().enumerate() {
        if !grid.is_dirichlet(k) {
            *p += Vec2::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)) * (amp * h);
        }
    }
    eta
}

pub fn random_field(n: usize, r: &mut ChaCha8Rng, grid: &ReferenceGrid) -> Vec<Vec2> {
    (0..n)
        .map(|k| {
            if grid.is_dirichlet(k) {
                Vec2::zeros()
            } else {
                Vec2::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))
            }
        })
        .collect()
}

pub fn pair(a: &[Vec2], b: &[Vec2]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

pub fn shifted(eta: &DeformationField, phi: &[Vec2], s: f64) -> DeformationField {
    let mut out = eta.clone();
    for (p, d) in out.positions_mut().iter_mut().zip(phi) {
        *p += d * s;
    }
    out
}

pub fn central_difference(f: impl Fn(f64) -> f64, eps: f64) -> f64 {
    (f(eps) - f(-eps)) / (2.0 * eps)
}
