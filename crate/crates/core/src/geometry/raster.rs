use super::{ContainerBox, DeformationField, GeometryError, Vec2};

/// Deformed element quads, corners in counter-clockwise reference order.
pub fn element_quads(eta: &DeformationField) -> Vec<[Vec2; 4]> {
    let grid = eta.grid();
    let p = eta.positions();
    (0..grid.cell_count())
        .map(|c| grid.cell_corners(c).map(|n| p[n]))
        .collect()
}

/// Shoelace area of a polygon, positive when counter-clockwise.
pub fn quad_signed_area(q: &[Vec2]) -> f64 {
    let n = q.len();
    0.5 * (0..n).map(|k| q[k].perp(&q[(k + 1) % n])).sum::<f64>()
}

/// Crossing-number point-in-polygon test with half-open edge rule.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Union of the deformed element images sampled on a supersampled grid over `Ω`.
#[derive(Debug, Clone)]
pub struct RasterMask {
    pub nsx: usize,
    pub nsy: usize,
    pub subsamples: usize,
    pub sample_dx: f64,
    pub sample_dy: f64,
    pub bits: Vec<bool>,
}

impl RasterMask {
    pub fn build(eta: &DeformationField, container: &ContainerBox, subsamples: usize) -> Result<Self, GeometryError> {
        let s = subsamples.max(1);
        let (nsx, nsy) = (container.nx * s, container.ny * s);
        let sdx = container.dx() / s as f64;
        let sdy = container.dy() / s as f64;
        let mut bits = vec![false; nsx * nsy];
        for (e, q) in element_quads(eta).iter().enumerate() {
            let area = quad_signed_area(q);
            if !(area > 0.0) {
                return Err(GeometryError::DegenerateElement(e, area));
            }
            let lo = q.iter().fold(Vec2::repeat(f64::INFINITY), |m, p| m.inf(p));
            let hi = q.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |m, p| m.sup(p));
            let range = |lo: f64, hi: f64, origin: f64, h: f64, n: usize| {
                let a = ((lo - origin) / h - 0.5).ceil().max(0.0) as usize;
                let b = ((hi - origin) / h - 0.5).floor();
                let b = if b < 0.0 { return (1, 0) } else { (b as usize).min(n - 1) };
                (a, b)
            };
            let (i0, i1) = range(lo.x, hi.x, container.min.x, sdx, nsx);
            let (j0, j1) = range(lo.y, hi.y, container.min.y, sdy, nsy);
            for j in j0..=j1 {
                let y = container.min.y + (j as f64 + 0.5) * sdy;
                for i in i0..=i1 {
                    let x = container.min.x + (i as f64 + 0.5) * sdx;
                    if point_in_polygon(Vec2::new(x, y), q) {
                        bits[j * nsx + i] = true;
                    }
                }
            }
        }
        Ok(Self { nsx, nsy, subsamples: s, sample_dx: sdx, sample_dy: sdy, bits })
    }

    pub fn area(&self) -> f64 {
        self.bits.iter().filter(|&&b| b).count() as f64 * self.sample_dx * self.sample_dy
    }

    /// Fraction of the subsamples of fluid cell `(i, j)` covered by the solid.
    pub fn occupancy(&self, i: usize, j: usize) -> f64 {
        let s = self.subsamples;
        let mut n = 0usize;
        for b in 0..s {
            let row = (j * s + b) * self.nsx;
            n += self.bits[row + i * s..row + (i + 1) * s].iter().filter(|&&x| x).count();
        }
        n as f64 / (s * s) as f64
    }
}

/// Area of `η(Q)` by rasterization.
pub fn image_volume(eta: &DeformationField, container: &ContainerBox, subsamples: usize) -> Result<f64, GeometryError> {
    Ok(RasterMask::build(eta, container, subsamples)?.area())
}

/// `∫_Q det∇η − |η(Q)|`, with the integral by the midpoint rule.
pub fn ciarlet_necas_defect(eta: &DeformationField, container: &ContainerBox, subsamples: usize) -> Result<f64, GeometryError> {
    let quads = element_quads(eta);
    let h2 = eta.grid().spacing().powi(2);
    let integral: f64 = super::evaluate_jets(eta).iter().map(|j| j.det_f * h2).sum();
    debug_assert!((integral - quads.iter().map(|q| quad_signed_area(q)).sum::<f64>()).abs() < 1e-9);
    Ok(integral - image_volume(eta, container, subsamples)?)
}

/// Acceptance tolerance for the defect: twice the raster sample spacing
/// times the length of the deformed boundary.
pub fn cn_tolerance(eta: &DeformationField, container: &ContainerBox, subsamples: usize) -> f64 {
    let s = subsamples.max(1) as f64;
    let spacing = (container.dx() / s).max(container.dy() / s);
    let ring = eta.grid().boundary_ring();
    let p = eta.positions();
    let length: f64 = (0..ring.len()).map(|k| (p[ring[(k + 1) % ring.len()]] - p[ring[k]]).norm()).sum();
    2.0 * spacing * length
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ReferenceGrid;
    use std::sync::Arc;

    fn setup(n: usize) -> (Arc<ReferenceGrid>, ContainerBox) {
        let g = Arc::new(ReferenceGrid::new(n, n, 1.0 / (n - 1) as f64, Vec2::new(1.0, 0.5)).unwrap());
        let c = ContainerBox::new(Vec2::zeros(), Vec2::new(3.0, 2.0), 96, 64).unwrap();
        (g, c)
    }

    #[test]
    fn identity_volume_and_defect() {
        let (g, c) = setup(17);
        let eta = DeformationField::identity(g);
        let tol = cn_tolerance(&eta, &c, 4);
        assert!((image_volume(&eta, &c, 4).unwrap() - 1.0).abs() <= tol);
        assert!(ciarlet_necas_defect(&eta, &c, 4).unwrap().abs() <= tol);
    }

    #[test]
    fn translation_invariant() {
        let (g, c) = setup(9);
        let eta = DeformationField::from_fn(g, |x| x + Vec2::new(0.313, 0.171));
        let tol = cn_tolerance(&eta, &c, 4);
        assert!((image_volume(&eta, &c, 4).unwrap() - 1.0).abs() <= tol);
    }

    #[test]
    fn degenerate_element_rejected() {
        let (g, c) = setup(3);
        let mut eta = DeformationField::identity(g);
        eta.positions_mut()[4] = Vec2::new(0.9, 0.4);
        assert!(matches!(image_volume(&eta, &c, 4), Err(GeometryError::DegenerateElement(..))));
    }

    #[test]
    fn volume_error_shrinks_with_subsamples() {
        let (g, c) = setup(9);
        let center = Vec2::new(1.5, 1.0);
        let eta = DeformationField::from_fn(g, |x| {
            let d = x - center;
            center + d * (1.0 + 0.15 * (d.x * d.y * 4.0).sin()) + Vec2::new(0.05 * d.y * d.y, 0.0)
        });
        let exact: f64 = element_quads(&eta).iter().map(|q| quad_signed_area(q)).sum();
        let errs: Vec<f64> = [1, 2, 4, 8]
            .iter()
            .map(|&s| (image_volume(&eta, &c, s).unwrap() - exact).abs())
            .collect();
        // the mean error over the ladder must fall; single rungs may tie by luck
        assert!(errs[3] < errs[0] && errs[2] + errs[3] < errs[0] + errs[1], "{errs:?}");
    }
}
