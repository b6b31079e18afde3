use super::{point_in_polygon, ContainerBox, DeformationField, Vec2};

/// Boundary samples per element edge used by the clearance monitor.
pub const SAMPLES_PER_EDGE: usize = 4;

/// Self-distance and wall-distance parts of the boundary clearance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryClearance {
    /// Closest approach between boundary parts that face each other from outside.
    pub self_distance: f64,
    /// Closest approach of `η(M)` to `∂Ω`.
    pub wall_distance: f64,
}

impl BoundaryClearance {
    pub fn min(&self) -> f64 {
        self.self_distance.min(self.wall_distance)
    }
}

struct Sample {
    pos: Vec2,
    arc: f64,
    traced: bool,
}

fn samples(eta: &DeformationField, per_edge: usize) -> (Vec<Sample>, f64) {
    let grid = eta.grid();
    let ring = grid.boundary_ring();
    let p = eta.positions();
    let h = grid.spacing();
    let mut out = Vec::with_capacity(ring.len() * per_edge);
    for (k, &a) in ring.iter().enumerate() {
        let b = ring[(k + 1) % ring.len()];
        for s in 0..per_edge {
            let t = s as f64 / per_edge as f64;
            let traced = if s == 0 {
                !grid.is_dirichlet(a)
            } else {
                !(grid.is_dirichlet(a) && grid.is_dirichlet(b))
            };
            out.push(Sample { pos: p[a] * (1.0 - t) + p[b] * t, arc: (k as f64 + t) * h, traced });
        }
    }
    (out, ring.len() as f64 * h)
}

fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let t = if d.norm_squared() > 0.0 { ((p - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + d * t)).norm()
}

pub fn boundary_clearance(eta: &DeformationField, container: &ContainerBox) -> BoundaryClearance {
    let grid = eta.grid();
    let (pts, perimeter) = samples(eta, SAMPLES_PER_EDGE);
    let poly: Vec<Vec2> = grid.boundary_ring().iter().map(|&n| eta.positions()[n]).collect();
    let (lx, ly) = grid.side_lengths();
    let separation = 0.5 * lx.min(ly);
    let on_boundary_tol = 1e-9 * (1.0 + perimeter);

    let mut self_distance = f64::INFINITY;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            let gap = (b.arc - a.arc).abs();
            if gap.min(perimeter - gap) < separation {
                continue;
            }
            let d = (a.pos - b.pos).norm();
            if d >= self_distance {
                continue;
            }
            let mid = (a.pos + b.pos) * 0.5;
            if point_in_polygon(mid, &poly) {
                continue;
            }
            let n = poly.len();
            let edge = (0..n).map(|k| segment_distance(mid, poly[k], poly[(k + 1) % n])).fold(f64::INFINITY, f64::min);
            if edge > on_boundary_tol || d <= on_boundary_tol {
                self_distance = d;
            }
        }
    }
    let wall_distance = pts
        .iter()
        .filter(|s| s.traced)
        .map(|s| container.wall_distance(s.pos))
        .fold(f64::INFINITY, f64::min);
    BoundaryClearance { self_distance, wall_distance }
}

/// Smallest boundary clearance, used as the contact monitor.
pub fn min_boundary_self_distance(eta: &DeformationField, container: &ContainerBox) -> f64 {
    boundary_clearance(eta, container).min()
}
