use smallvec::SmallVec;

use super::grid::{CellKind, FluidGrid};
use crate::geometry::{Mat2, Vec2};

/// Interpolation stencil of one velocity component at a point.
pub type Weights = SmallVec<[(usize, f64); 4]>;

/// Staggered velocity on the container grid, with cell kinds and pressure.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalVelocityField {
    pub grid: FluidGrid,
    pub faces: Vec<f64>,
    pub kinds: Vec<CellKind>,
    pub pressure: Vec<f64>,
}

/// Linear interpolation on a 1-D lattice of `n` nodes, coordinate `x` in
/// lattice units. Returns `(node, weight, d weight/dx)` pairs; neighbours
/// outside a non-periodic lattice are ghosts that the caller mirrors.
fn axis(x: f64, n: usize, periodic: bool) -> [(i64, f64, f64); 2] {
    if periodic {
        let k = x.floor();
        let t = x - k;
        let k = k as i64;
        return [(k.rem_euclid(n as i64), 1.0 - t, -1.0), ((k + 1).rem_euclid(n as i64), t, 1.0)];
    }
    // ghost nodes at -1 and n sit half a cell outside the walls
    let clamped = x.clamp(-0.5, n as f64 - 0.5);
    let k = clamped.floor().min(n as f64 - 1.0);
    let t = clamped - k;
    let d = if clamped == x { 1.0 } else { 0.0 };
    [(k as i64, 1.0 - t, -d), (k as i64 + 1, t, d)]
}

/// Mirror ghost nodes back into the lattice with a sign flip (no-slip).
fn fold(k: i64, n: usize) -> (usize, f64) {
    if k < 0 {
        (0, -1.0)
    } else if k >= n as i64 {
        (n - 1, -1.0)
    } else {
        (k as usize, 1.0)
    }
}

/// Face, value weight and the two derivative weights.
type Tap = (usize, f64, f64, f64);

pub(crate) fn grid_taps(g: &FluidGrid, p: Vec2) -> [SmallVec<[Tap; 4]>; 2] {
    let m = g.container.min;
    let (nx, ny, dx, dy) = (g.nx(), g.ny(), g.dx(), g.dy());
    let mut tu = SmallVec::new();
    let xs = axis((p.x - m.x) / dx, g.u_cols(), g.periodic_x);
    let ys = axis((p.y - m.y) / dy - 0.5, ny, false);
    for &(i, wi, di) in &xs {
        for &(j, wj, dj) in &ys {
            let (jj, s) = fold(j, ny);
            // u columns 0 and nx are wall faces; beyond them the value stays zero
            let ii = i.clamp(0, g.u_cols() as i64 - 1) as usize;
            tu.push((g.u(ii, jj), s * wi * wj, s * di * wj / dx, s * wi * dj / dy));
        }
    }
    let mut tv = SmallVec::new();
    let xs = axis((p.x - m.x) / dx - 0.5, nx, g.periodic_x);
    let ys = axis((p.y - m.y) / dy, ny + 1, false);
    for &(i, wi, di) in &xs {
        for &(j, wj, dj) in &ys {
            let (ii, s) = if g.periodic_x { (i as usize, 1.0) } else { fold(i, nx) };
            let jj = j.clamp(0, ny as i64) as usize;
            tv.push((g.v(ii, jj), s * wi * wj, s * di * wj / dx, s * wi * dj / dy));
        }
    }
    [tu, tv]
}

impl GlobalVelocityField {
    pub fn new(grid: FluidGrid, faces: Vec<f64>, kinds: Vec<CellKind>, pressure: Vec<f64>) -> Self {
        Self { grid, faces, kinds, pressure }
    }

    pub fn zeros(grid: FluidGrid) -> Self {
        let (nf, nc) = (grid.n_faces(), grid.cell_count());
        Self { grid, faces: vec![0.0; nf], kinds: vec![CellKind::Fluid; nc], pressure: vec![0.0; nc] }
    }

    fn taps(&self, p: Vec2) -> [SmallVec<[Tap; 4]>; 2] {
        grid_taps(&self.grid, p)
    }

    /// Bilinear weights for the `u` and `v` components at `p`.
    pub fn interpolation_weights(&self, p: Vec2) -> [Weights; 2] {
        self.grid.interpolation_weights(p).map(|t| t.iter().filter(|x| x.1 != 0.0).map(|x| (x.0, x.1)).collect())
    }

    pub fn velocity_at(&self, p: Vec2) -> Vec2 {
        let [tu, tv] = self.taps(p);
        let ev = |t: &SmallVec<[Tap; 4]>| t.iter().map(|x| x.1 * self.faces[x.0]).sum::<f64>();
        Vec2::new(ev(&tu), ev(&tv))
    }

    /// Containing cell of `p`, clamped to the grid.
    pub fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let g = &self.grid;
        let m = g.container.min;
        let i = ((p.x - m.x) / g.dx()).floor();
        let i = if g.periodic_x {
            (i as i64).rem_euclid(g.nx() as i64) as usize
        } else {
            i.clamp(0.0, g.nx() as f64 - 1.0) as usize
        };
        let j = ((p.y - m.y) / g.dy()).floor().clamp(0.0, g.ny() as f64 - 1.0) as usize;
        (i, j)
    }

    /// Velocity gradient at `p`, `a[(c, d)] = ∂_d v_c`.
    ///
    /// The diagonal uses the face differences of the containing cell, so its
    /// trace is that cell's discrete divergence; off-diagonal terms come from
    /// differentiating the bilinear interpolants.
    pub fn gradient_at(&self, p: Vec2) -> Mat2 {
        let g = &self.grid;
        let (i, j) = self.cell_of(p);
        let [l, r, b, t] = g.cell_faces(i, j);
        let ux = (self.faces[r] - self.faces[l]) / g.dx();
        let vy = (self.faces[t] - self.faces[b]) / g.dy();
        let [tu, tv] = self.taps(p);
        let uy = tu.iter().map(|x| x.3 * self.faces[x.0]).sum::<f64>();
        let vx = tv.iter().map(|x| x.2 * self.faces[x.0]).sum::<f64>();
        Mat2::new(ux, uy, vx, vy)
    }

    pub fn divergence(&self, i: usize, j: usize) -> f64 {
        let g = &self.grid;
        let [l, r, b, t] = g.cell_faces(i, j);
        (self.faces[r] - self.faces[l]) / g.dx() + (self.faces[t] - self.faces[b]) / g.dy()
    }

    pub fn max_fluid_divergence(&self) -> f64 {
        let g = &self.grid;
        let mut m = 0.0f64;
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                if self.kinds[g.cell(i, j)] == CellKind::Fluid {
                    m = m.max(self.divergence(i, j).abs());
                }
            }
        }
        m
    }

    /// `Σ |u_f|²·dx·dy` over all faces.
    pub fn l2_norm_sq(&self) -> f64 {
        self.faces.iter().map(|v| v * v).sum::<f64>() * self.grid.dx() * self.grid.dy()
    }
}

impl FluidGrid {
    /// Bilinear weights for the `u` and `v` components at `p`.
    pub fn interpolation_weights(&self, p: Vec2) -> [Weights; 2] {
        grid_taps(self, p).map(|t| t.iter().filter(|x| x.1 != 0.0).map(|x| (x.0, x.1)).collect())
    }
}
