use super::grid::{CellKind, FluidGrid};
use crate::geometry::difference_stencils;

/// A weighted linear functional of face values, `weight·(Σ coef·u_f)²`.
pub type Sample = (f64, Vec<(usize, f64)>);

fn merge(mut a: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    a.sort_by_key(|t| t.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(a.len());
    for (f, c) in a {
        match out.last_mut() {
            Some(last) if last.0 == f => last.1 += c,
            _ => out.push((f, c)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

/// Samples with `Σ weight·(a·u)² = ‖ε u‖²` over the cells selected by `include`.
///
/// Normal strains live at cell centers, shear strain at cell corners with a
/// quarter of each adjacent selected cell as weight and mirror ghosts at walls.
pub fn strain_samples(grid: &FluidGrid, include: impl Fn(usize) -> bool) -> Vec<Sample> {
    let (nx, ny, dx, dy) = (grid.nx(), grid.ny(), grid.dx(), grid.dy());
    let area = dx * dy;
    let mut out = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if !include(grid.cell(i, j)) {
                continue;
            }
            out.push((area, vec![(grid.u(i + 1, j), 1.0 / dx), (grid.u(i, j), -1.0 / dx)]));
            out.push((area, vec![(grid.v(i, j + 1), 1.0 / dy), (grid.v(i, j), -1.0 / dy)]));
        }
    }
    out.extend(shear_samples(grid, include, 2.0 * 0.25 * area, 0.5));
    out
}

/// Corner samples of `scale·(∂u/∂y + ∂v/∂x)`; `quarter` is the weight per adjacent selected cell.
fn shear_samples(grid: &FluidGrid, include: impl Fn(usize) -> bool, quarter: f64, scale: f64) -> Vec<Sample> {
    let (nx, ny, dx, dy) = (grid.nx(), grid.ny(), grid.dx(), grid.dy());
    let cols = if grid.periodic_x { nx } else { nx + 1 };
    let mut out = Vec::new();
    for cj in 0..=ny {
        for ci in 0..cols {
            let mut m = 0usize;
            for (di, dj) in [(-1i64, -1i64), (0, -1), (-1, 0), (0, 0)] {
                let (mut ii, jj) = (ci as i64 + di, cj as i64 + dj);
                if grid.periodic_x {
                    ii = ii.rem_euclid(nx as i64);
                }
                if ii < 0 || jj < 0 || ii >= nx as i64 || jj >= ny as i64 {
                    continue;
                }
                if include(grid.cell(ii as usize, jj as usize)) {
                    m += 1;
                }
            }
            if m == 0 {
                continue;
            }
            let mut a = Vec::with_capacity(4);
            // ∂u/∂y with u = 0 enforced at the bottom and top walls by mirror ghosts
            let up = if cj < ny { (grid.u(ci, cj), 1.0) } else { (grid.u(ci, ny - 1), -1.0) };
            let down = if cj > 0 { (grid.u(ci, cj - 1), 1.0) } else { (grid.u(ci, 0), -1.0) };
            a.push((up.0, scale * up.1 / dy));
            a.push((down.0, -scale * down.1 / dy));
            // ∂v/∂x, mirrored at the side walls unless periodic
            let right = if ci < nx {
                (grid.v(ci, cj), 1.0)
            } else {
                (grid.v(nx - 1, cj), -1.0)
            };
            let left = if ci > 0 {
                (grid.v(ci - 1, cj), 1.0)
            } else if grid.periodic_x {
                (grid.v(nx - 1, cj), 1.0)
            } else {
                (grid.v(0, cj), -1.0)
            };
            a.push((right.0, scale * right.1 / dx));
            a.push((left.0, -scale * left.1 / dx));
            out.push((m as f64 * quarter, merge(a)));
        }
    }
    out
}

/// Samples with `Σ weight·(a·u)² = ‖∇u‖²` over the whole container, used for Korn norms.
pub fn gradient_samples(grid: &FluidGrid) -> Vec<Sample> {
    let (nx, ny, dx, dy) = (grid.nx(), grid.ny(), grid.dx(), grid.dy());
    let area = dx * dy;
    let mut out = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            out.push((area, vec![(grid.u(i + 1, j), 1.0 / dx), (grid.u(i, j), -1.0 / dx)]));
            out.push((area, vec![(grid.v(i, j + 1), 1.0 / dy), (grid.v(i, j), -1.0 / dy)]));
        }
    }
    // ∂u/∂y and ∂v/∂x separately, each with full corner weight
    for s in shear_samples(grid, |_| true, 0.25 * area, 1.0) {
        let (w, a) = s;
        let (uy, vx): (Vec<_>, Vec<_>) = a.into_iter().partition(|t| grid.is_u(t.0));
        out.push((w, uy));
        out.push((w, vx));
    }
    out
}

/// k-th order difference samples on the `u` and `v` lattices, restricted to
/// stencils whose faces all touch a fluid cell.
pub fn regularizer_samples(grid: &FluidGrid, kinds: &[CellKind], k: usize) -> Vec<Sample> {
    let touches_fluid = |f: usize| grid.face_cells(f).iter().flatten().any(|&c| kinds[c] == CellKind::Fluid);
    let mut out = Vec::new();
    let (dx, dy) = (grid.dx(), grid.dy());
    for st in difference_stencils(grid.u_cols(), grid.ny(), dx, dy, k) {
        let taps: Vec<(usize, f64)> = st.taps.iter().map(|&(i, j, w)| (grid.u(i, j), w)).collect();
        if taps.iter().all(|t| touches_fluid(t.0)) {
            out.push((st.weight, taps));
        }
    }
    for st in difference_stencils(grid.nx(), grid.ny() + 1, dx, dy, k) {
        let taps: Vec<(usize, f64)> = st.taps.iter().map(|&(i, j, w)| (grid.v(i, j), w)).collect();
        if taps.iter().all(|t| touches_fluid(t.0)) {
            out.push((st.weight, taps));
        }
    }
    out
}

/// Triplets of `Σ 2·scale·weight·a aᵀ`, the Hessian of `scale·Σ weight·(a·u)²`.
pub fn hessian_triplets(samples: &[Sample], scale: f64, out: &mut Vec<(usize, usize, f64)>) {
    for (w, a) in samples {
        let s = 2.0 * scale * w;
        for &(f, cf) in a {
            for &(g, cg) in a {
                out.push((f, g, s * cf * cg));
            }
        }
    }
}

pub fn evaluate(samples: &[Sample], u: &[f64]) -> f64 {
    samples.iter().map(|(w, a)| {
        let d: f64 = a.iter().map(|&(f, c)| c * u[f]).sum();
        w * d * d
    }).sum()
}
