// Index-heavy tensor kernels read better as explicit range loops.
#![allow(clippy::needless_range_loop)]

//! Numerical projective tractor calculus on coordinate charts.
//!
//! The crate evaluates projective differential geometry exactly at points of a
//! single chart: truncated Taylor (jet) arithmetic supplies derivatives of any
//! order, on top of which sit the curvature stack of an affine connection, the
//! tractor bundle with its canonical connection and Thomas-D operator, the
//! splitting operator into the prolonged bundle for Killing tensors, and the
//! explicit rank-1 and rank-2 prolongation connections.  Parallel transport of
//! prolonged states around loops recovers solution-space dimensions by
//! holonomy.
//!
//! Modules mirror the layering: [`jet`] and [`expr`] are the evaluation
//! substrate, [`tensor`] the pointwise multi-index arrays, [`geometry`] the
//! affine/projective structure, [`tractor`] the tractor calculus, [`killing`]
//! the prolongation machinery, [`transport`] curves and holonomy, and
//! [`suite`] the batch verification pipelines behind the CLI.

pub mod batch;
pub mod catalog;
pub mod config;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod jet;
pub mod killing;
pub mod linalg;
pub mod suite;
pub mod tensor;
pub mod tractor;
pub mod transport;

pub use error::{Error, Result};
