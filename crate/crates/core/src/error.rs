use std::path::PathBuf;

use crate::equilibrium::EquilibriumResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid network: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("no route connects {origin} -> {destination} within the hop limit")]
    NoRoutes { origin: u32, destination: u32 },

    #[error(
        "solver did not converge after {} iterations (residual {:.3e})",
        .0.iterations,
        .0.final_residual
    )]
    NonConvergence(Box<EquilibriumResult>),

    #[error("numerical breakdown at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
