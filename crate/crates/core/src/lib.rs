//! Adaptive isogeometric boundary element method for the Laplace equation on
//! closed NURBS curves in 2D.
//!
//! The hyper-singular and weakly-singular integral equations are discretized
//! with transformed NURBS over admissible knot meshes. The adaptive driver
//! refines elements, raises knot multiplicities and lowers them again based on
//! weighted-residual indicators and a Scott–Zhang based coarsening indicator.

pub mod cli;
pub mod driver;
pub mod error;
pub mod estimators;
pub mod geometry;
pub mod mesh;
pub mod operators;
pub mod projections;
pub mod quadrature;
pub mod spaces;
pub mod splines;

pub use error::{Error, Result};
