use thiserror::Error;

use crate::diophantine::Target;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice imaginary part is singular (|det Im e'| = {det:e})")]
    SingularLattice { det: f64 },

    #[error("matrices {i} and {j} do not commute (defect {defect:e})")]
    NotCommuting { i: usize, j: usize, defect: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("matrix is singular (eigenvalue modulus {modulus:e})")]
    SingularMatrix { modulus: f64 },

    #[error("upper triangular matrix has more than one eigenvalue (spread {spread:e})")]
    NotSingleEigenvalue { spread: f64 },

    #[error("evaluation point has a zero horizontal coordinate at index {0}")]
    ZeroHCoordinate(usize),

    #[error("Laurent band overflow: dropped coefficient mass {dropped_mass:e}")]
    PBandOverflow { dropped_mass: f64 },

    #[error("deck is resonant over the scanned range: P={p:?} Q={q:?} target={target}")]
    ResonantInput { p: Vec<i32>, q: Vec<u32>, target: Target },

    #[error("generator change matrix is not unimodular (det = {det})")]
    NotUnimodular { det: i64 },

    #[error("resonant divisor {value:e} at P={p:?} Q={q:?} target={target}")]
    ResonantDivisor { p: Vec<i32>, q: Vec<u32>, target: Target, value: f64 },

    #[error("right-hand sides fail the compatibility relations at P={p:?} Q={q:?}")]
    IncompatibleRhs { p: Vec<i32>, q: Vec<u32> },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("commutation defect {defect:e} between generators {i} and {j} exceeds {tolerance:e}")]
    CommutationDefectTooLarge { i: usize, j: usize, defect: f64, tolerance: f64 },

    #[error("iteration did not converge after {steps} steps (last residual {residual:e})")]
    NoConvergence {
        steps: usize,
        residual: f64,
        report: Box<crate::kam::KamReport>,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
