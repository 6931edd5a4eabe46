//! Bootstrap algebraic multigrid for the two-dimensional Wilson-Dirac
//! operator with U(1) gauge fields.
//!
//! The crate is organised bottom-up: [`lattice`] geometry, [`gauge`]
//! configurations, the sparse [`operator`] layer, dense kernels in
//! [`eigensolver`], Kaczmarz relaxation in [`smoother`], interpolation and
//! Galerkin products in [`transfer`], the multigrid hierarchy in [`mg`], the
//! Krylov baselines in [`krylov`] and the experiment [`harness`] used by the
//! command-line tool.

pub mod eigensolver;
pub mod error;
pub mod gauge;
pub mod harness;
pub mod krylov;
pub mod lattice;
pub mod mg;
pub mod operator;
pub mod smoother;
pub mod sparse;
pub mod transfer;
pub mod vector;

pub use error::{Error, Result};
pub use sparse::SparseComplexOperator;
pub use vector::{SpinorField, C64};
