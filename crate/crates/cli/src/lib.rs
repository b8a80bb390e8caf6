//! Command-line front end for the martingality diagnostics: configuration,
//! the preset catalog, command dispatch and the acceptance suite.

pub mod acceptance;
pub mod catalog;
pub mod commands;
pub mod config;
pub mod report;

use martingality::feller::FellerError;
use martingality::hilbert::HilbertError;
use martingality::jumpkit::JumpError;
use martingality::mc::McError;
use martingality::model::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("acceptance failure: {0}")]
    Acceptance(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Acceptance(_) => 3,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        match e {
            McError::Config(_) | McError::Model(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<FellerError> for CliError {
    fn from(e: FellerError) -> Self {
        match e {
            FellerError::NotOneDimensional(_)
            | FellerError::Inhomogeneous
            | FellerError::ReferencePoint { .. }
            | FellerError::PreconditionViolated(_)
            | FellerError::Model(_) => CliError::Validation(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<JumpError> for CliError {
    fn from(e: JumpError) -> Self {
        match e {
            JumpError::Validation(_) | JumpError::Model(_) => CliError::Validation(e.to_string()),
            JumpError::Mc(inner) => inner.into(),
            JumpError::JumpBoundViolation { .. } => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<HilbertError> for CliError {
    fn from(e: HilbertError) -> Self {
        match e {
            HilbertError::Covariance(_) | HilbertError::Functional(_) => CliError::Validation(e.to_string()),
            HilbertError::Mc(inner) => inner.into(),
            HilbertError::EvalDomain { .. } => CliError::Numerical(e.to_string()),
        }
    }
}
