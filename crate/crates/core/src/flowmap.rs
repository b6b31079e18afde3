//! Marker-based discrete flow map with Jacobian tracking, and the
//! transported inertia term of the time-delayed fluid problem.

use thiserror::Error;

use crate::fluid::{CellKind, FluidGrid, GlobalVelocityField, QuadraticExtras, SolidMask};
use crate::geometry::{Mat2, Vec2};

/// Bounds on `det ∇Φ` enforced during every epoch.
pub const DET_BOUNDS: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowMapError {
    #[error("marker {marker} left the container at ({x}, {y})")]
    MarkerEscaped { marker: usize, x: f64, y: f64 },
    #[error("det of the flow map Jacobian left [1/2, 2]: {det} at marker {marker}")]
    DetDrift { marker: usize, det: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marker {
    pub origin: Vec2,
    pub position: Vec2,
    pub jacobian: Mat2,
    /// Quadrature weight (area) attached to the marker.
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowMapState {
    pub markers: Vec<Marker>,
    pub epoch_start: f64,
    pub time: f64,
}

impl FlowMapState {
    /// One marker at the center of every fluid cell.
    pub fn seed(mask: &SolidMask, t0: f64) -> Self {
        let g = &mask.grid;
        let area = g.dx() * g.dy();
        let mut markers = Vec::new();
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                if mask.kinds[g.cell(i, j)] == CellKind::Fluid {
                    let p = g.container.cell_center(i, j);
                    markers.push(Marker { origin: p, position: p, jacobian: Mat2::identity(), volume: area });
                }
            }
        }
        Self { markers, epoch_start: t0, time: t0 }
    }

    /// New epoch: current positions become origins and the Jacobians reset.
    pub fn restart(&self) -> Self {
        let markers = self
            .markers
            .iter()
            .map(|m| Marker { origin: m.position, position: m.position, jacobian: Mat2::identity(), volume: m.volume })
            .collect();
        Self { markers, epoch_start: self.time, time: self.time }
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.markers.iter().map(|m| m.position).collect()
    }
}

/// One explicit step `Φ ← (id + τv)∘Φ`, `J ← (I + τ∇v)J`.
///
/// Outside fluid cells only the trace-free part of `∇v` enters the Jacobian,
/// since there the interpolated field is not discretely solenoidal.
pub fn advance(state: &FlowMapState, v: &GlobalVelocityField, tau: f64) -> Result<FlowMapState, FlowMapError> {
    let g = &v.grid;
    let c = &g.container;
    let mut markers = Vec::with_capacity(state.markers.len());
    for (k, m) in state.markers.iter().enumerate() {
        let mut a = v.gradient_at(m.position);
        let (i, j) = v.cell_of(m.position);
        if v.kinds[g.cell(i, j)] != CellKind::Fluid {
            a -= Mat2::identity() * (0.5 * a.trace());
        }
        let mut p = m.position + v.velocity_at(m.position) * tau;
        let (sx, sy) = (g.dx(), g.dy());
        if g.periodic_x {
            let w = c.max.x - c.min.x;
            p.x = c.min.x + (p.x - c.min.x).rem_euclid(w);
        } else if p.x < c.min.x - sx || p.x > c.max.x + sx {
            return Err(FlowMapError::MarkerEscaped { marker: k, x: p.x, y: p.y });
        }
        if p.y < c.min.y - sy || p.y > c.max.y + sy {
            return Err(FlowMapError::MarkerEscaped { marker: k, x: p.x, y: p.y });
        }
        p.x = p.x.clamp(c.min.x, c.max.x);
        p.y = p.y.clamp(c.min.y, c.max.y);
        markers.push(Marker { position: p, jacobian: (Mat2::identity() + a * tau) * m.jacobian, ..*m });
    }
    Ok(FlowMapState { markers, epoch_start: state.epoch_start, time: state.time + tau })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetDrift {
    pub max_abs_dev: f64,
    pub min: f64,
    pub max: f64,
}

pub fn det_drift(state: &FlowMapState) -> DetDrift {
    let mut d = DetDrift { max_abs_dev: 0.0, min: f64::INFINITY, max: f64::NEG_INFINITY };
    for m in &state.markers {
        let det = m.jacobian.determinant();
        d.max_abs_dev = d.max_abs_dev.max((det - 1.0).abs());
        d.min = d.min.min(det);
        d.max = d.max.max(det);
    }
    if state.markers.is_empty() {
        d.min = 1.0;
        d.max = 1.0;
    }
    d
}

/// Fails with [`FlowMapError::DetDrift`] when a Jacobian leaves [`DET_BOUNDS`].
pub fn check_det_bounds(state: &FlowMapState) -> Result<(), FlowMapError> {
    for (k, m) in state.markers.iter().enumerate() {
        let det = m.jacobian.determinant();
        if !(det >= DET_BOUNDS.0 && det <= DET_BOUNDS.1) {
            return Err(FlowMapError::DetDrift { marker: k, det });
        }
    }
    Ok(())
}

/// Value and face gradient of `Σ weight·vol·|v(Φ(y)) − w(y)|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct InertiaPair {
    pub value: f64,
    pub face_gradient: Vec<f64>,
}

pub fn transported_inertia_pair(state: &FlowMapState, v_now: &GlobalVelocityField, w_prev: &[Vec2], weight: f64) -> InertiaPair {
    let mut value = 0.0;
    let mut face_gradient = vec![0.0; v_now.faces.len()];
    for (m, w) in state.markers.iter().zip(w_prev) {
        let [wu, wv] = v_now.grid.interpolation_weights(m.position);
        let r = v_now.velocity_at(m.position) - w;
        let s = weight * m.volume;
        value += s * r.norm_squared();
        for &(f, c) in &wu {
            face_gradient[f] += 2.0 * s * r.x * c;
        }
        for &(f, c) in &wv {
            face_gradient[f] += 2.0 * s * r.y * c;
        }
    }
    InertiaPair { value, face_gradient }
}

/// The same term as a quadratic form `½vᵀHv − cᵀv + const` over the faces.
pub fn inertia_quadratic(state: &FlowMapState, grid: &FluidGrid, w_prev: &[Vec2], weight: f64) -> QuadraticExtras {
    let mut x = QuadraticExtras::default();
    for (m, w) in state.markers.iter().zip(w_prev) {
        let s = weight * m.volume;
        for (comp, taps) in grid.interpolation_weights(m.position).iter().enumerate() {
            for &(f, a) in taps {
                for &(g, b) in taps {
                    x.triplets.push((f, g, 2.0 * s * a * b));
                }
                x.linear.push((f, 2.0 * s * a * w[comp]));
            }
        }
        x.constant += s * w.norm_squared();
    }
    x
}

/// Velocity samples `v(Φ(y))` at the current marker positions.
pub fn sample_markers(state: &FlowMapState, v: &GlobalVelocityField) -> Vec<Vec2> {
    state.markers.iter().map(|m| v.velocity_at(m.position)).collect()
}
