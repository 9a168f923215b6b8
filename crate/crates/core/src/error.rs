// SPDX-License-Identifier: MIT OR Apache-2.0

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A configuration knob is outside its supported range.
    #[error("configuration error: {0}")]
    Config(String),
    /// Caller-supplied data or indices violate a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Parameters of a construction violate one of its constraints.
    #[error("infeasible parameters: {constraint}")]
    Infeasible { constraint: String },
    /// The request is valid but too large for the chosen routine.
    #[error("refused: {0}")]
    Refused(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn infeasible(constraint: impl Into<String>) -> Self {
        Error::Infeasible {
            constraint: constraint.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
