use std::collections::BTreeMap;

use super::{cofactor, DeformationField, Mat2, ReferenceGrid, Vec2};

/// One stencil entry: node index and weight.
pub type Tap = (usize, f64);

/// Per-cell difference stencils evaluated at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStencils {
    pub dx: Vec<Vec<Tap>>,
    pub dy: Vec<Vec<Tap>>,
    pub dxx: Vec<Vec<Tap>>,
    pub dxy: Vec<Vec<Tap>>,
    pub dyy: Vec<Vec<Tap>>,
}

/// Unscaled nodal second difference along a line of `n` nodes at position `i`.
fn line_second(n: usize, i: usize) -> Vec<(usize, f64)> {
    match n {
        0..=2 => Vec::new(),
        3 => vec![(0, 1.0), (1, -2.0), (2, 1.0)],
        _ if i == 0 => vec![(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)],
        _ if i == n - 1 => vec![(n - 1, 2.0), (n - 2, -5.0), (n - 3, 4.0), (n - 4, -1.0)],
        _ => vec![(i - 1, 1.0), (i, -2.0), (i + 1, 1.0)],
    }
}

fn collect(map: BTreeMap<usize, f64>) -> Vec<Tap> {
    map.into_iter().filter(|&(_, w)| w != 0.0).collect()
}

impl CellStencils {
    pub fn build(nx: usize, ny: usize, h: f64) -> Self {
        let cells = (nx - 1) * (ny - 1);
        let mut s = Self {
            dx: Vec::with_capacity(cells),
            dy: Vec::with_capacity(cells),
            dxx: Vec::with_capacity(cells),
            dxy: Vec::with_capacity(cells),
            dyy: Vec::with_capacity(cells),
        };
        let idx = |i: usize, j: usize| j * nx + i;
        let h2 = h * h;
        for cj in 0..ny - 1 {
            for ci in 0..nx - 1 {
                let (n00, n10, n01, n11) = (idx(ci, cj), idx(ci + 1, cj), idx(ci, cj + 1), idx(ci + 1, cj + 1));
                let w = 0.5 / h;
                s.dx.push(vec![(n00, -w), (n10, w), (n01, -w), (n11, w)]);
                s.dy.push(vec![(n00, -w), (n10, -w), (n01, w), (n11, w)]);
                let w = 1.0 / h2;
                s.dxy.push(vec![(n00, w), (n10, -w), (n01, -w), (n11, w)]);

                let mut xx = BTreeMap::new();
                let mut yy = BTreeMap::new();
                for (i, j) in [(ci, cj), (ci + 1, cj), (ci, cj + 1), (ci + 1, cj + 1)] {
                    for (p, w) in line_second(nx, i) {
                        *xx.entry(idx(p, j)).or_insert(0.0) += 0.25 * w / h2;
                    }
                    for (p, w) in line_second(ny, j) {
                        *yy.entry(idx(i, p)).or_insert(0.0) += 0.25 * w / h2;
                    }
                }
                s.dxx.push(collect(xx));
                s.dyy.push(collect(yy));
            }
        }
        s
    }
}

fn apply(taps: &[Tap], values: &[Vec2]) -> Vec2 {
    taps.iter().fold(Vec2::zeros(), |acc, &(n, w)| acc + values[n] * w)
}

/// Deformation jet at one quadrature point (cell center).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JetSample {
    /// `f[(c, a)] = ∂_a η_c`.
    pub f: Mat2,
    /// `g[c]` is the Hessian of component `c`.
    pub g: [Mat2; 2],
    pub det_f: f64,
    pub cof_f: Mat2,
}

impl JetSample {
    /// Squared Frobenius norm of the second gradient.
    pub fn g_norm_sq(&self) -> f64 {
        self.g[0].norm_squared() + self.g[1].norm_squared()
    }
}

/// Gradient of a nodal field in cell `c`.
pub fn cell_gradient(grid: &ReferenceGrid, c: usize, values: &[Vec2]) -> Mat2 {
    let s = grid.stencils();
    let dx = apply(&s.dx[c], values);
    let dy = apply(&s.dy[c], values);
    Mat2::new(dx.x, dy.x, dx.y, dy.y)
}

/// Second gradient of a nodal field in cell `c`.
pub fn cell_hessian(grid: &ReferenceGrid, c: usize, values: &[Vec2]) -> [Mat2; 2] {
    let s = grid.stencils();
    let xx = apply(&s.dxx[c], values);
    let xy = apply(&s.dxy[c], values);
    let yy = apply(&s.dyy[c], values);
    [Mat2::new(xx.x, xy.x, xy.x, yy.x), Mat2::new(xx.y, xy.y, xy.y, yy.y)]
}

/// Adds `Σ_n ⟨p, ∇φ⟩` contributions of a cell co-gradient `p` to nodal co-vectors.
pub fn scatter_gradient(grid: &ReferenceGrid, c: usize, p: &Mat2, out: &mut [Vec2]) {
    let s = grid.stencils();
    let px = Vec2::new(p[(0, 0)], p[(1, 0)]);
    let py = Vec2::new(p[(0, 1)], p[(1, 1)]);
    for &(n, w) in &s.dx[c] {
        out[n] += px * w;
    }
    for &(n, w) in &s.dy[c] {
        out[n] += py * w;
    }
}

/// Adjoint of [`cell_hessian`] for a co-Hessian `p`.
pub fn scatter_hessian(grid: &ReferenceGrid, c: usize, p: &[Mat2; 2], out: &mut [Vec2]) {
    let s = grid.stencils();
    let pxx = Vec2::new(p[0][(0, 0)], p[1][(0, 0)]);
    let pxy = Vec2::new(p[0][(0, 1)] + p[0][(1, 0)], p[1][(0, 1)] + p[1][(1, 0)]);
    let pyy = Vec2::new(p[0][(1, 1)], p[1][(1, 1)]);
    for &(n, w) in &s.dxx[c] {
        out[n] += pxx * w;
    }
    for &(n, w) in &s.dxy[c] {
        out[n] += pxy * w;
    }
    for &(n, w) in &s.dyy[c] {
        out[n] += pyy * w;
    }
}

pub fn evaluate_jets(eta: &DeformationField) -> Vec<JetSample> {
    let grid = eta.grid();
    (0..grid.cell_count())
        .map(|c| {
            let f = cell_gradient(grid, c, eta.positions());
            let g = cell_hessian(grid, c, eta.positions());
            JetSample { f, g, det_f: f.determinant(), cof_f: cofactor(&f) }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn grid(n: usize) -> Arc<ReferenceGrid> {
        Arc::new(ReferenceGrid::new(n, n, 1.0 / (n - 1) as f64, Vec2::zeros()).unwrap())
    }

    #[test]
    fn identity_jets() {
        for s in evaluate_jets(&DeformationField::identity(grid(6))) {
            assert!((s.f - Mat2::identity()).norm() < 1e-14);
            assert!(s.g_norm_sq() < 1e-20);
            assert!((s.det_f - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn affine_jets_are_exact() {
        let a = Mat2::new(2.0, 0.3, -0.1, 1.0);
        let eta = DeformationField::from_fn(grid(5), |x| a * x + Vec2::new(0.2, 0.1));
        for s in evaluate_jets(&eta) {
            assert!((s.f - a).norm() < 1e-12);
            assert!(s.g_norm_sq().sqrt() < 1e-10);
            assert!((s.det_f - a.determinant()).abs() < 1e-12);
            assert_eq!(s.cof_f, cofactor(&s.f));
        }
        let d = Mat2::new(2.0, 0.0, 0.0, 1.0);
        for s in evaluate_jets(&DeformationField::from_fn(grid(5), |x| d * x)) {
            assert!((s.det_f - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_hessian_is_exact() {
        for n in [3, 4, 7] {
            let eta = DeformationField::from_fn(grid(n), |x| {
                Vec2::new(x.x * x.x + 0.5 * x.x * x.y, -x.y * x.y + 3.0 * x.x * x.y + x.x)
            });
            for s in evaluate_jets(&eta) {
                assert!((s.g[0] - Mat2::new(2.0, 0.5, 0.5, 0.0)).norm() < 1e-9, "n={n}");
                assert!((s.g[1] - Mat2::new(0.0, 3.0, 3.0, -2.0)).norm() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn gradient_matches_independent_oracle() {
        use rand::{Rng, SeedableRng};
        let g = grid(5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let eps = 0.05;
        let eta = DeformationField::from_fn(g.clone(), |x| {
            x + Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * eps
        });
        let h = g.spacing();
        let p = eta.positions();
        let at = |i: usize, j: usize| p[j * 5 + i];
        let jets = evaluate_jets(&eta);
        for cj in 0..4 {
            for ci in 0..4 {
                // average of the two edge differences in each direction
                let ex = ((at(ci + 1, cj) - at(ci, cj)) + (at(ci + 1, cj + 1) - at(ci, cj + 1))) / (2.0 * h);
                let ey = ((at(ci, cj + 1) - at(ci, cj)) + (at(ci + 1, cj + 1) - at(ci + 1, cj))) / (2.0 * h);
                let f = jets[cj * 4 + ci].f;
                assert!((f.column(0) - ex).norm() < 1e-12);
                assert!((f.column(1) - ey).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn scatter_is_adjoint_of_gather() {
        let g = grid(5);
        let phi: Vec<Vec2> = (0..25).map(|k| Vec2::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos())).collect();
        let p = Mat2::new(0.3, -1.2, 0.7, 2.0);
        let q = [Mat2::new(1.0, 0.2, -0.4, 0.5), Mat2::new(-0.3, 0.8, 0.1, 1.5)];
        for c in 0..g.cell_count() {
            let mut out = vec![Vec2::zeros(); 25];
            scatter_gradient(&g, c, &p, &mut out);
            scatter_hessian(&g, c, &q, &mut out);
            let lhs: f64 = out.iter().zip(&phi).map(|(a, b)| a.dot(b)).sum();
            let hs = cell_hessian(&g, c, &phi);
            let rhs = p.component_mul(&cell_gradient(&g, c, &phi)).sum()
                + q[0].component_mul(&hs[0]).sum()
                + q[1].component_mul(&hs[1]).sum();
            assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
        }
    }
}
