//! Global velocity on the fixed container grid: masked Stokes problem with a
//! pressure multiplier and the coupling to the solid trace.

mod csr;
mod field;
mod forms;
mod grid;
mod korn;
mod stokes;

pub use csr::Csr;
pub use field::{GlobalVelocityField, Weights};
pub use forms::{evaluate as evaluate_samples, gradient_samples, regularizer_samples, strain_samples, Sample};
pub use grid::{build_mask, CellKind, FluidGrid, SolidFace, SolidMask};
pub use korn::{global_korn_report, KornReport};
pub use stokes::{stokes_solve, QuadraticExtras, StokesOperator, StokesParams, StokesSolution};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FluidError {
    #[error("singular saddle-point system: {0}")]
    SingularSystem(String),
    #[error("boundary data violates flux compatibility (relative defect {0:e})")]
    IncompatibleFlux(f64),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}
