//! Numerical analysis of planar autonomous flows `ẋ = f(x, y), ẏ = g(x, y)`.
//!
//! The crate locates equilibria and limit cycles, builds combinatorial
//! outer approximations of the time-τ flow map on box grids, extracts
//! maximal invariant sets and checks whether an isolated invariant continuum
//! `K` is a global attractor, an attractor, a repeller or saddle-like.
//!
//! The expression evaluator and the integrator are generic over [`Scalar`]
//! (`f32` or `f64`); everything above them works in `f64` through the aliases
//! exported here.

pub mod classify;
pub mod cli;
pub mod equilibria;
mod error;
pub mod expr;
pub mod field;
pub mod integrate;
pub mod limitsets;
pub mod report;
pub mod scalar;
pub mod svg;
pub mod topology;

pub use error::{Error, Result};
pub use expr::{parse, Expr, ExprError, Var};
pub use field::{builtin, VectorField, BUILTIN_NAMES};
pub use scalar::{Rect, Scalar, Vec2};

/// A point of the phase plane in double precision.
pub type Point = Vec2<f64>;
/// Single precision point.
pub type PointF32 = Vec2<f32>;
/// 2×2 matrix, row-major.
pub type Mat2 = [[f64; 2]; 2];

pub type IntegrationParams = integrate::IntegrationParams<f64>;
pub type IntegrationParamsF32 = integrate::IntegrationParams<f32>;
pub type Trajectory = integrate::Trajectory<f64>;
pub type TrajectoryF32 = integrate::Trajectory<f32>;
pub type Termination = integrate::Termination<f64>;
