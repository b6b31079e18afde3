use std::sync::Arc;

use super::jets::CellStencils;
use super::{GeometryError, Vec2};

/// Structured node grid on the reference rectangle `Q`.
///
/// Nodes are numbered row-major, `index = j * nx + i`.
#[derive(Debug, Clone)]
pub struct ReferenceGrid {
    nx: usize,
    ny: usize,
    spacing: f64,
    origin: Vec2,
    dirichlet: Vec<bool>,
    gamma: Vec<Vec2>,
    ring: Vec<usize>,
    stencils: CellStencils,
}

impl ReferenceGrid {
    /// Grid with the bottom edge clamped at its reference positions.
    pub fn new(nx: usize, ny: usize, spacing: f64, origin: Vec2) -> Result<Self, GeometryError> {
        let bottom: Vec<usize> = (0..nx).collect();
        Self::with_dirichlet(nx, ny, spacing, origin, &bottom, None)
    }

    /// Grid with an explicit Dirichlet node set. `gamma` defaults to the
    /// reference positions of those nodes.
    pub fn with_dirichlet(
        nx: usize,
        ny: usize,
        spacing: f64,
        origin: Vec2,
        nodes: &[usize],
        gamma: Option<&[Vec2]>,
    ) -> Result<Self, GeometryError> {
        if nx < 2 || ny < 2 {
            return Err(GeometryError::GridTooSmall { nx, ny });
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(GeometryError::BadSpacing(spacing));
        }
        let n = nx * ny;
        let mut dirichlet = vec![false; n];
        let mut gamma_all: Vec<Vec2> = (0..n)
            .map(|k| origin + Vec2::new((k % nx) as f64, (k / nx) as f64) * spacing)
            .collect();
        for (slot, &node) in nodes.iter().enumerate() {
            let (i, j) = (node % nx, node / nx);
            if node >= n || !(i == 0 || j == 0 || i == nx - 1 || j == ny - 1) {
                return Err(GeometryError::DirichletNotOnBoundary(node));
            }
            dirichlet[node] = true;
            if let Some(g) = gamma {
                gamma_all[node] = g[slot];
            }
        }
        let ring = boundary_ring(nx, ny);
        let stencils = CellStencils::build(nx, ny, spacing);
        Ok(Self { nx, ny, spacing, origin, dirichlet, gamma: gamma_all, ring, stencils })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }
    pub fn cell_count(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn origin(&self) -> Vec2 {
        self.origin
    }
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    pub fn reference_position(&self, node: usize) -> Vec2 {
        self.origin + Vec2::new((node % self.nx) as f64, (node / self.nx) as f64) * self.spacing
    }
    pub fn side_lengths(&self) -> (f64, f64) {
        ((self.nx - 1) as f64 * self.spacing, (self.ny - 1) as f64 * self.spacing)
    }
    pub fn area(&self) -> f64 {
        let (a, b) = self.side_lengths();
        a * b
    }
    pub fn is_boundary(&self, node: usize) -> bool {
        let (i, j) = (node % self.nx, node / self.nx);
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }
    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.dirichlet[node]
    }
    /// Nodes of the Dirichlet part `P`.
    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&k| self.dirichlet[k]).collect()
    }
    /// Nodes of the traced boundary `M = ∂Q \ P`.
    pub fn traced_nodes(&self) -> Vec<usize> {
        self.ring.iter().copied().filter(|&k| !self.dirichlet[k]).collect()
    }
    pub fn gamma(&self, node: usize) -> Option<Vec2> {
        self.dirichlet[node].then(|| self.gamma[node])
    }
    /// Boundary nodes in counter-clockwise order, starting at the lower left corner.
    pub fn boundary_ring(&self) -> &[usize] {
        &self.ring
    }
    pub fn stencils(&self) -> &CellStencils {
        &self.stencils
    }
    /// The four corner nodes of cell `c` in counter-clockwise order.
    pub fn cell_corners(&self, c: usize) -> [usize; 4] {
        let (ci, cj) = (c % (self.nx - 1), c / (self.nx - 1));
        let n00 = self.index(ci, cj);
        [n00, n00 + 1, n00 + 1 + self.nx, n00 + self.nx]
    }
    /// Lumped nodal quadrature weights (trapezoidal rule).
    pub fn lumped_mass(&self) -> Vec<f64> {
        let d2 = self.spacing * self.spacing;
        (0..self.node_count())
            .map(|k| {
                let (i, j) = (k % self.nx, k / self.nx);
                let wi = if i == 0 || i == self.nx - 1 { 0.5 } else { 1.0 };
                let wj = if j == 0 || j == self.ny - 1 { 0.5 } else { 1.0 };
                d2 * wi * wj
            })
            .collect()
    }
}

fn boundary_ring(nx: usize, ny: usize) -> Vec<usize> {
    let mut ring = Vec::with_capacity(2 * (nx + ny) - 4);
    for i in 0..nx - 1 {
        ring.push(i);
    }
    for j in 0..ny - 1 {
        ring.push(j * nx + nx - 1);
    }
    for i in (1..nx).rev() {
        ring.push((ny - 1) * nx + i);
    }
    for j in (1..ny).rev() {
        ring.push(j * nx);
    }
    ring
}

/// Nodal deformation of the reference grid.
#[derive(Debug, Clone)]
pub struct DeformationField {
    grid: Arc<ReferenceGrid>,
    positions: Vec<Vec2>,
}

impl DeformationField {
    pub fn identity(grid: Arc<ReferenceGrid>) -> Self {
        let positions = (0..grid.node_count()).map(|k| grid.reference_position(k)).collect();
        Self { grid, positions }
    }

    pub fn from_fn(grid: Arc<ReferenceGrid>, mut f: impl FnMut(Vec2) -> Vec2) -> Self {
        let positions = (0..grid.node_count()).map(|k| f(grid.reference_position(k))).collect();
        Self { grid, positions }
    }

    /// Wraps raw positions without checking the Dirichlet condition.
    pub fn from_positions(grid: Arc<ReferenceGrid>, positions: Vec<Vec2>) -> Result<Self, GeometryError> {
        if positions.len() != grid.node_count() {
            return Err(GeometryError::LengthMismatch { expected: grid.node_count(), got: positions.len() });
        }
        Ok(Self { grid, positions })
    }

    pub fn from_flat(grid: Arc<ReferenceGrid>, flat: &[f64]) -> Result<Self, GeometryError> {
        if flat.len() != 2 * grid.node_count() {
            return Err(GeometryError::LengthMismatch { expected: grid.node_count(), got: flat.len() / 2 });
        }
        let positions = flat.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect();
        Ok(Self { grid, positions })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.positions.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn grid(&self) -> &ReferenceGrid {
        &self.grid
    }
    pub fn grid_arc(&self) -> &Arc<ReferenceGrid> {
        &self.grid
    }
    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }
    pub fn positions_mut(&mut self) -> &mut [Vec2] {
        &mut self.positions
    }

    /// Overwrites the Dirichlet nodes with their prescribed positions.
    pub fn enforce_dirichlet(&mut self) {
        for k in 0..self.positions.len() {
            if let Some(g) = self.grid.gamma(k) {
                self.positions[k] = g;
            }
        }
    }

    pub fn check_dirichlet(&self) -> Result<(), GeometryError> {
        for (k, p) in self.positions.iter().enumerate() {
            if let Some(g) = self.grid.gamma(k) {
                if *p != g {
                    return Err(GeometryError::DirichletViolated(k));
                }
            }
        }
        Ok(())
    }

    pub fn check_inside(&self, container: &ContainerBox) -> Result<(), GeometryError> {
        for (k, p) in self.positions.iter().enumerate() {
            if !container.contains(*p) {
                return Err(GeometryError::OutsideContainer(k));
            }
        }
        Ok(())
    }
}

/// The container `Ω` with its fluid grid resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ContainerBox {
    pub min: Vec2,
    pub max: Vec2,
    pub nx: usize,
    pub ny: usize,
}

impl ContainerBox {
    pub fn new(min: Vec2, max: Vec2, nx: usize, ny: usize) -> Result<Self, GeometryError> {
        if !(max.x > min.x && max.y > min.y) {
            return Err(GeometryError::EmptyContainer);
        }
        if nx < 8 || ny < 8 {
            return Err(GeometryError::ContainerTooCoarse { nx, ny });
        }
        Ok(Self { min, max, nx, ny })
    }

    pub fn dx(&self) -> f64 {
        (self.max.x - self.min.x) / self.nx as f64
    }
    pub fn dy(&self) -> f64 {
        (self.max.y - self.min.y) / self.ny as f64
    }
    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
    pub fn strictly_contains(&self, p: Vec2) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }
    /// Distance from an interior point to the nearest wall; zero outside.
    pub fn wall_distance(&self, p: Vec2) -> f64 {
        let d = (p.x - self.min.x).min(self.max.x - p.x).min(p.y - self.min.y).min(self.max.y - p.y);
        d.max(0.0)
    }
    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        self.min + Vec2::new((i as f64 + 0.5) * self.dx(), (j as f64 + 0.5) * self.dy())
    }

    pub fn check_gamma(&self, grid: &ReferenceGrid) -> Result<(), GeometryError> {
        for k in grid.dirichlet_nodes() {
            if !self.strictly_contains(grid.gamma(k).unwrap()) {
                return Err(GeometryError::GammaOutsideContainer(k));
            }
        }
        Ok(())
    }
}
