use thiserror::Error;

/// Which marginal of a weight matrix failed the stochasticity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Column,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::Row => f.write_str("row"),
            Axis::Column => f.write_str("column"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid feasible set: {0}")]
    InvalidSet(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("weight matrix is not square ({rows} rows, row {row} has {len} entries)")]
    NotSquare { rows: usize, row: usize, len: usize },

    #[error("weight matrix has a negative entry w[{row}][{col}] = {value}")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("weight matrix entry w[{row}][{col}] = {value} is outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },

    #[error("weight matrix is not doubly stochastic: {axis} {index} sums to 1 + {residual:e}")]
    NotDoublyStochastic {
        axis: Axis,
        index: usize,
        residual: f64,
    },

    #[error("weight matrix graph is not strongly connected: agent {to} is unreachable from agent {from}")]
    NotStronglyConnected { from: usize, to: usize },

    #[error("inadmissible action for agent {agent}: {reason}")]
    InadmissibleAction { agent: usize, reason: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }

    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
