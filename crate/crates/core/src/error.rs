//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors reported by the bound evaluators and their front end.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration value is missing, malformed or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// The requested target cannot be met because the error floor lies above it.
    #[error("target below error floor (floor_md = {floor_md:.6e}, floor_fa = {floor_fa:.6e})")]
    BelowFloor {
        /// Misdetection floor of the configuration.
        floor_md: f64,
        /// False-alarm floor of the configuration.
        floor_fa: f64,
    },
    /// The target is not met anywhere in the search bracket.
    #[error("infeasible bracket: {0}")]
    InfeasibleBracket(String),
    /// A Monte-Carlo cell exceeds the configured enumeration cap.
    #[error("subset cap exceeded: {subsets} subsets > cap {cap}")]
    SubsetCap {
        /// Number of subsets the cell would require.
        subsets: f64,
        /// Configured cap.
        cap: f64,
    },
    /// A numerical routine failed to converge or produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Reading or writing a file failed.
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
