//! Reference and physical grids, finite-difference jets, rasterized image
//! volume and the injectivity monitors built on top of it.

mod clearance;
mod grid;
pub(crate) mod jets;
mod lattice;
mod raster;

pub use clearance::{boundary_clearance, min_boundary_self_distance, BoundaryClearance};
pub use grid::{ContainerBox, DeformationField, ReferenceGrid};
pub use jets::{evaluate_jets, CellStencils, JetSample, Tap};
pub use lattice::{difference_stencils, LatticeStencil};
pub use raster::{
    ciarlet_necas_defect, cn_tolerance, element_quads, image_volume, point_in_polygon,
    quad_signed_area, RasterMask,
};

use thiserror::Error;

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("grid needs at least 2 nodes per axis, got {nx}x{ny}")]
    GridTooSmall { nx: usize, ny: usize },
    #[error("grid spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("container resolution must be at least 8 cells per axis, got {nx}x{ny}")]
    ContainerTooCoarse { nx: usize, ny: usize },
    #[error("container extents are empty or inverted")]
    EmptyContainer,
    #[error("dirichlet node {0} is not a boundary node")]
    DirichletNotOnBoundary(usize),
    #[error("dirichlet position of node {0} is not strictly inside the container")]
    GammaOutsideContainer(usize),
    #[error("field has {got} positions, grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("node {0} violates its dirichlet position")]
    DirichletViolated(usize),
    #[error("node {0} lies outside the container")]
    OutsideContainer(usize),
    #[error("element {0} has non-positive signed area {1:e}")]
    DegenerateElement(usize, f64),
}

/// 2x2 cofactor matrix, so that `cof(F) : dF` is the differential of `det F`.
pub fn cofactor(f: &Mat2) -> Mat2 {
    Mat2::new(f[(1, 1)], -f[(1, 0)], -f[(0, 1)], f[(0, 0)])
}
