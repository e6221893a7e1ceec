use thiserror::Error;

use crate::simplex::LpError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed instance: {0}")]
    Parse(String),

    #[error("edge {index}: {message}")]
    InvalidEdge { index: usize, message: String },

    #[error("unknown generator model `{0}` (expected uniform, complete, star or small-x-high-ratio)")]
    UnknownModel(String),

    #[error("{0}")]
    InvalidParameter(String),

    #[error("edges {0:?} do not share a common vertex")]
    NoCommonVertex(Vec<usize>),

    #[error("vertex {vertex} has degree {degree}, above the cap of {cap}")]
    DegreeCap {
        vertex: String,
        degree: usize,
        cap: usize,
    },

    #[error("x violates the constraint of vertex {vertex} on edges {witness:?} by {violation:.3e}")]
    InfeasibleMarginals {
        vertex: String,
        witness: Vec<usize>,
        violation: f64,
    },

    #[error("B vertex {vertex} has fractional degree {degree} above sigma = {sigma}")]
    DegreeAboveSigma { vertex: usize, degree: f64, sigma: f64 },

    #[error("x_tilde exceeds x on edge {0}")]
    TildeAboveX(usize),

    #[error("value {value} lies outside [0, {sigma}]")]
    OutOfDomain { value: f64, sigma: f64 },

    #[error("exact enumeration supports at most {cap} {what}, got {actual}")]
    SizeCap {
        what: &'static str,
        cap: usize,
        actual: usize,
    },

    #[error("enumeration budget of {0} tree nodes exceeded")]
    BudgetExceeded(u64),

    #[error("conditioning event has probability {0:e}")]
    ZeroProbabilityCondition(f64),

    #[error("linear program: {0}")]
    Lp(#[from] LpError),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
