//! Finite-volume solver for congested crowd motion with a p-Laplacian
//! potential and a drift, on uniform Cartesian grids.

pub mod config;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod evolution;
pub mod field;
pub mod graph;
pub mod grid;
pub mod io;
pub mod limit;
pub mod linalg;
pub mod ops;
pub mod scenarios;
pub mod stationary;

pub use error::{CrowdError, Result};
pub use field::{FaceVectorField, ScalarField};
pub use grid::{BoundaryKind, Edge, Grid2D};
