//! Numerical laboratory for conformal capacity of smooth star-shaped bodies.
//!
//! The crate solves a regularized 3-harmonic exterior problem on a
//! boundary-fitted grid, extracts level surfaces of the potential, and
//! evaluates the monotone surface quantities whose endpoints encode the
//! capacity–mass comparison. The high-level entry points live in
//! [`pipeline`]; the remaining modules are the building blocks in
//! dependency order:
//!
//! - [`domain`] — radial-graph bodies and metric scenarios
//! - [`parametric`] — curvature of the boundary from its graph
//! - [`grid`] — boundary-fitted exterior grid, metric coefficients,
//!   finite-difference operators
//! - [`solver`] — regularized 3-harmonic solve (Picard outer loop,
//!   conjugate-gradient inner loop)
//! - [`synthesis`] — harmonic conformal factors with minimal boundary
//! - [`levelset`] — level-surface extraction and surface integrals
//! - [`capacity`] — asymptotic expansion fit and capacity extraction
//! - [`monotone`] — the monotone quantities along the level flow and
//!   their verdicts
//! - [`mass`] — ADM mass from factor decay, asymmetry, inequality checks
//!
//! All floating-point reductions go through [`par`], which produces results
//! independent of thread count (and bit-identical to the sequential
//! fallback), so every run is reproducible.

pub mod asymmetry;
pub mod capacity;
pub mod domain;
pub mod error;
pub mod grid;
pub mod levelset;
pub mod mass;
pub mod monotone;
pub mod par;
pub mod parametric;
pub mod pipeline;
pub mod quad;
pub mod solver;
pub mod synthesis;

pub use error::{Error, Result};
