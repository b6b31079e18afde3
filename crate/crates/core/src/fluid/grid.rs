use crate::geometry::{
    element_quads, point_in_polygon, ContainerBox, DeformationField, GeometryError, RasterMask, Vec2,
};

/// Staggered (MAC) indexing on the container grid.
///
/// `u` faces sit at `(i·dx, (j+½)·dy)`, `v` faces at `((i+½)·dx, j·dy)`.
/// All `u` faces come first, then all `v` faces.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidGrid {
    pub container: ContainerBox,
    /// Identifies the left and right walls, turning `x` into a periodic direction.
    pub periodic_x: bool,
}

impl FluidGrid {
    pub fn new(container: ContainerBox) -> Self {
        Self { container, periodic_x: false }
    }
    pub fn periodic(container: ContainerBox) -> Self {
        Self { container, periodic_x: true }
    }
    pub fn nx(&self) -> usize {
        self.container.nx
    }
    pub fn ny(&self) -> usize {
        self.container.ny
    }
    pub fn dx(&self) -> f64 {
        self.container.dx()
    }
    pub fn dy(&self) -> f64 {
        self.container.dy()
    }
    pub fn cell_count(&self) -> usize {
        self.nx() * self.ny()
    }
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }
    /// Number of distinct `u` columns.
    pub fn u_cols(&self) -> usize {
        if self.periodic_x { self.nx() } else { self.nx() + 1 }
    }
    pub fn n_u(&self) -> usize {
        self.u_cols() * self.ny()
    }
    pub fn n_v(&self) -> usize {
        self.nx() * (self.ny() + 1)
    }
    pub fn n_faces(&self) -> usize {
        self.n_u() + self.n_v()
    }
    /// `u` face index; `i` may equal `nx` and wraps when periodic.
    pub fn u(&self, i: usize, j: usize) -> usize {
        j * self.u_cols() + if self.periodic_x { i % self.nx() } else { i }
    }
    pub fn v(&self, i: usize, j: usize) -> usize {
        self.n_u() + j * self.nx() + i
    }
    pub fn is_u(&self, face: usize) -> bool {
        face < self.n_u()
    }
    /// Lattice coordinates `(i, j)` of a face within its component lattice.
    pub fn face_ij(&self, face: usize) -> (usize, usize) {
        if self.is_u(face) {
            (face % self.u_cols(), face / self.u_cols())
        } else {
            let k = face - self.n_u();
            (k % self.nx(), k / self.nx())
        }
    }
    pub fn face_position(&self, face: usize) -> Vec2 {
        let (i, j) = self.face_ij(face);
        let m = self.container.min;
        if self.is_u(face) {
            m + Vec2::new(i as f64 * self.dx(), (j as f64 + 0.5) * self.dy())
        } else {
            m + Vec2::new((i as f64 + 0.5) * self.dx(), j as f64 * self.dy())
        }
    }
    /// The (up to two) cells sharing a face.
    pub fn face_cells(&self, face: usize) -> [Option<usize>; 2] {
        let (i, j) = self.face_ij(face);
        if self.is_u(face) {
            let left = if i > 0 {
                Some(self.cell(i - 1, j))
            } else if self.periodic_x {
                Some(self.cell(self.nx() - 1, j))
            } else {
                None
            };
            let right = (i < self.nx()).then(|| self.cell(i, j));
            [left, right]
        } else {
            let below = (j > 0).then(|| self.cell(i, j - 1));
            let above = (j < self.ny()).then(|| self.cell(i, j));
            [below, above]
        }
    }
    /// Faces of cell `(i, j)`: left, right, bottom, top.
    pub fn cell_faces(&self, i: usize, j: usize) -> [usize; 4] {
        [self.u(i, j), self.u(i + 1, j), self.v(i, j), self.v(i, j + 1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Fluid,
    Solid,
    Wall,
}

/// Prescribed face carrying the interpolated solid velocity component.
#[derive(Debug, Clone, PartialEq)]
pub struct SolidFace {
    pub face: usize,
    /// 0 for `u` faces, 1 for `v` faces.
    pub component: usize,
    /// Nodal weights of `b ∘ η⁻¹` at the face center.
    pub weights: Vec<(usize, f64)>,
}

/// Partition of the container cells and the solid trace data.
#[derive(Debug, Clone, PartialEq)]
pub struct SolidMask {
    pub grid: FluidGrid,
    pub occupancy: Vec<f64>,
    pub kinds: Vec<CellKind>,
    pub solid_faces: Vec<SolidFace>,
}

impl SolidMask {
    /// Mask from explicit cell kinds, without solid trace weights.
    pub fn from_kinds(grid: FluidGrid, kinds: Vec<CellKind>) -> Self {
        let occupancy = kinds.iter().map(|k| if *k == CellKind::Solid { 1.0 } else { 0.0 }).collect();
        let mut mask = Self { grid, occupancy, kinds, solid_faces: Vec::new() };
        mask.solid_faces = mask.solid_face_ids().into_iter().map(|f| SolidFace {
            face: f,
            component: if mask.grid.is_u(f) { 0 } else { 1 },
            weights: Vec::new(),
        }).collect();
        mask
    }

    pub fn all_fluid(grid: FluidGrid) -> Self {
        let n = grid.cell_count();
        Self::from_kinds(grid, vec![CellKind::Fluid; n])
    }

    /// Faces that touch a solid cell and neither a wall cell nor the container wall.
    fn solid_face_ids(&self) -> Vec<usize> {
        (0..self.grid.n_faces())
            .filter(|&f| {
                let cells = self.grid.face_cells(f);
                cells.iter().all(|c| matches!(c, Some(c) if self.kinds[*c] != CellKind::Wall))
                    && cells.iter().any(|c| self.kinds[c.unwrap()] == CellKind::Solid)
            })
            .collect()
    }

    pub fn is_free(&self, face: usize) -> bool {
        self.grid.face_cells(face).iter().all(|c| matches!(c, Some(c) if self.kinds[*c] == CellKind::Fluid))
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }

    /// Solid area as counted by the mask.
    pub fn solid_area(&self) -> f64 {
        self.count(CellKind::Solid) as f64 * self.grid.dx() * self.grid.dy()
    }

    /// Face values of the solid trace for a nodal velocity `b`.
    pub fn trace_values(&self, b: &[Vec2]) -> Vec<f64> {
        self.solid_faces
            .iter()
            .map(|sf| sf.weights.iter().map(|&(n, w)| w * b[n][sf.component]).sum())
            .collect()
    }

    /// Adjoint of [`trace_values`](Self::trace_values).
    pub fn trace_adjoint(&self, face_grad: &[f64], nodes: usize) -> Vec<Vec2> {
        let mut out = vec![Vec2::zeros(); nodes];
        for (sf, g) in self.solid_faces.iter().zip(face_grad) {
            for &(n, w) in &sf.weights {
                out[n][sf.component] += w * g;
            }
        }
        out
    }
}

/// Cells with occupancy at least ½ are solid.
pub fn build_mask(eta: &DeformationField, grid: &FluidGrid, subsamples: usize) -> Result<SolidMask, GeometryError> {
    let raster = RasterMask::build(eta, &grid.container, subsamples)?;
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut occupancy = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            occupancy.push(raster.occupancy(i, j));
        }
    }
    let kinds = occupancy.iter().map(|&o| if o >= 0.5 { CellKind::Solid } else { CellKind::Fluid }).collect();
    let mut mask = SolidMask { grid: grid.clone(), occupancy, kinds, solid_faces: Vec::new() };
    let locator = Locator::new(eta);
    mask.solid_faces = mask
        .solid_face_ids()
        .into_iter()
        .map(|f| SolidFace {
            face: f,
            component: if grid.is_u(f) { 0 } else { 1 },
            weights: locator.weights(grid.face_position(f)),
        })
        .collect();
    Ok(mask)
}

/// Inverse of the bilinear element maps, with a boundary fallback.
struct Locator<'a> {
    eta: &'a DeformationField,
    quads: Vec<[Vec2; 4]>,
    boxes: Vec<(Vec2, Vec2)>,
}

impl<'a> Locator<'a> {
    fn new(eta: &'a DeformationField) -> Self {
        let quads = element_quads(eta);
        let boxes = quads
            .iter()
            .map(|q| {
                let lo = q.iter().fold(Vec2::repeat(f64::INFINITY), |m, p| m.inf(p));
                let hi = q.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |m, p| m.sup(p));
                (lo, hi)
            })
            .collect();
        Self { eta, quads, boxes }
    }

    fn weights(&self, p: Vec2) -> Vec<(usize, f64)> {
        let grid = self.eta.grid();
        for (e, q) in self.quads.iter().enumerate() {
            let (lo, hi) = self.boxes[e];
            if p.x < lo.x || p.x > hi.x || p.y < lo.y || p.y > hi.y || !point_in_polygon(p, q) {
                continue;
            }
            let (s, t) = invert_bilinear(q, p);
            let n = grid.cell_corners(e);
            let w = [(1.0 - s) * (1.0 - t), s * (1.0 - t), s * t, (1.0 - s) * t];
            return n.iter().zip(w).map(|(&n, w)| (n, w)).collect();
        }
        // outside the image: nearest point on the deformed boundary
        let ring = grid.boundary_ring();
        let pos = self.eta.positions();
        let mut best = (f64::INFINITY, 0usize, 0.0);
        for k in 0..ring.len() {
            let (a, b) = (pos[ring[k]], pos[ring[(k + 1) % ring.len()]]);
            let d = b - a;
            let t = if d.norm_squared() > 0.0 { ((p - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
            let dist = (p - (a + d * t)).norm();
            if dist < best.0 {
                best = (dist, k, t);
            }
        }
        let (_, k, t) = best;
        vec![(ring[k], 1.0 - t), (ring[(k + 1) % ring.len()], t)]
    }
}

/// Reference coordinates `(s, t) ∈ [0,1]²` of `p` in the bilinear quad `q`.
fn invert_bilinear(q: &[Vec2; 4], p: Vec2) -> (f64, f64) {
    let (mut s, mut t) = (0.5, 0.5);
    for _ in 0..30 {
        let x = q[0] * ((1.0 - s) * (1.0 - t)) + q[1] * (s * (1.0 - t)) + q[2] * (s * t) + q[3] * ((1.0 - s) * t);
        let r = x - p;
        if r.norm() < 1e-14 {
            break;
        }
        let ds = (q[1] - q[0]) * (1.0 - t) + (q[2] - q[3]) * t;
        let dt = (q[3] - q[0]) * (1.0 - s) + (q[2] - q[1]) * s;
        let j = nalgebra::Matrix2::from_columns(&[ds, dt]);
        match j.try_inverse() {
            Some(inv) => {
                let step = inv * r;
                s -= step.x;
                t -= step.y;
            }
            None => break,
        }
    }
    (s.clamp(0.0, 1.0), t.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ReferenceGrid;
    use std::sync::Arc;

    #[test]
    fn bilinear_inverse_round_trip() {
        let q = [Vec2::new(0.0, 0.0), Vec2::new(1.2, 0.1), Vec2::new(1.0, 1.3), Vec2::new(-0.1, 0.9)];
        let (s0, t0) = (0.3, 0.7);
        let p = q[0] * ((1.0 - s0) * (1.0 - t0)) + q[1] * (s0 * (1.0 - t0)) + q[2] * (s0 * t0) + q[3] * ((1.0 - s0) * t0);
        let (s, t) = invert_bilinear(&q, p);
        assert!((s - s0).abs() < 1e-12 && (t - t0).abs() < 1e-12);
    }

    #[test]
    fn identity_mask_is_the_square() {
        let g = Arc::new(ReferenceGrid::new(17, 17, 1.0 / 16.0, Vec2::new(1.0, 0.5)).unwrap());
        let c = ContainerBox::new(Vec2::zeros(), Vec2::new(3.0, 2.0), 96, 64).unwrap();
        let grid = FluidGrid::new(c);
        let mask = build_mask(&DeformationField::identity(g.clone()), &grid, 4).unwrap();
        assert_eq!(mask.count(CellKind::Solid), 32 * 32);
        for j in 0..64 {
            for i in 0..96 {
                let inside = (32..64).contains(&i) && (16..48).contains(&j);
                assert_eq!(mask.kinds[grid.cell(i, j)] == CellKind::Solid, inside);
            }
        }
        // interpolated trace of an affine nodal field is exact inside the image
        let b: Vec<Vec2> = (0..g.node_count()).map(|k| {
            let x = g.reference_position(k);
            Vec2::new(x.y - 0.5, 2.0 * x.x)
        }).collect();
        let vals = mask.trace_values(&b);
        for (sf, v) in mask.solid_faces.iter().zip(vals) {
            let p = grid.face_position(sf.face);
            let exact = if sf.component == 0 { p.y - 0.5 } else { 2.0 * p.x };
            assert!((v - exact).abs() < 1e-12);
        }
    }
}
