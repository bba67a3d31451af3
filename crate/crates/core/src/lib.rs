//! Korn constants and gradient-component constants of thin circular
//! cylindrical shells, computed as extreme generalized eigenvalues of
//! quadratic-form pencils, together with the two-dimensional rectangle
//! inequalities that control them.

pub mod ansatz;
pub mod cli;
pub mod eigen;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod geometry;
pub mod mode;
pub mod quadrature;
pub mod rect;

pub use error::{Component, KornError, Result};
pub use geometry::{FunctionSpace, ShellGeometry};
