//! Variational time stepping for a second-gradient viscoelastic solid,
//! alone or immersed in an incompressible Stokes fluid.
//!
//! The crate is organised bottom-up: [`geometry`] and [`energetics`] define
//! the solid functionals, [`minimize`] solves the incremental problems,
//! [`fluid`] and [`flowmap`] provide the Eulerian side, [`steppers`] drives
//! the time loops and [`ledger`] re-derives every energy inequality from the
//! recorded rows. [`io`] holds configuration and output plumbing.

pub mod geometry;
pub mod energetics;
pub mod minimize;
pub mod fluid;
pub mod flowmap;
pub mod steppers;
pub mod ledger;
pub mod io;
