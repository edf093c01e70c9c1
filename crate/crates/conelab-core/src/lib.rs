//! Numerical laboratory for a collapsing twisted conical Kähler–Ricci flow on `P^1 x P^1`.
//!
//! The flow is reduced, under a product ansatz and rotational symmetry, to a scalar parabolic
//! Monge–Ampère equation on the base coordinate `s = log|z|^2`. The crate provides the reduced
//! geometry ([`geometry`]), the regularized flow solver ([`flow`]), the elliptic limit solver
//! ([`limit`]), curvature and trace monitors with decay fits ([`estimates`]) and distance,
//! diameter and Gromov–Hausdorff bounds ([`metric`]).

pub mod config;
pub mod density;
pub mod diagnostics;
pub mod error;
pub mod estimates;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod limit;
pub mod metric;
pub mod operator;
pub mod pipeline;
pub mod potential;
pub mod quadrature;
pub mod tridiag;

pub use config::ModelConfig;
pub use density::Density;
pub use error::{LabError, Result};
pub use grid::RadialGrid;
pub use potential::{Closure, Potential};
