use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("unknown system `{0}`")]
    UnknownSystem(String),
    #[error("vector field is not finite near ({x}, {y})")]
    NonFiniteField { x: f64, y: f64 },
    #[error("orbit meets the section tangentially at ({x}, {y})")]
    TangentialCrossing { x: f64, y: f64 },
    #[error("field is tangent along the whole of polygon edge {0}")]
    DegenerateEdge(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("K is not a repeller; no dual attractor")]
    PreconditionNotRepeller,
    #[error("unable to classify the dual attractor: {0}")]
    UnableToClassifyKStar(String),
    #[error("parse error: {0}")]
    Parse(String),
}
