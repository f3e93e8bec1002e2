use thiserror::Error;

/// Errors raised by the solver and its diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid dimension `{name}` out of range: {value}")]
    NonPositiveDimension { name: &'static str, value: f64 },

    #[error("parameter `{name}` = {value} out of range: {reason}")]
    ParamOutOfRange {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("vacuum cell: density {rho:e} at or below floor {floor:e}")]
    VacuumCell { rho: f64, floor: f64 },

    #[error("non-finite input value {value} at index {index}")]
    NonFiniteInput { index: usize, value: f64 },

    #[error("negative density {value:e} at index {index} exceeds roundoff allowance {allowance:e}")]
    NegativeDensity {
        index: usize,
        value: f64,
        allowance: f64,
    },

    #[error("temperature tensor is not positive definite (min eigenvalue {min_eigenvalue:e}, floor {floor:e})")]
    TensorNotSpd { min_eigenvalue: f64, floor: f64 },

    #[error("non-finite state after update at index {index}")]
    NonFiniteState { index: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("coarse lattice is not nested in the reference lattice: {0}")]
    LatticeNotNested(String),

    #[error("refinement ladder: {0}")]
    InvalidLadder(String),

    #[error("cell {cell}: {source}")]
    InCell {
        cell: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_cell(self, cell: usize) -> Self {
        Error::InCell {
            cell,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// Innermost error, with cell/step context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::InCell { source, .. } | Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
