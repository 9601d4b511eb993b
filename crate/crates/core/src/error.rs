use thiserror::Error;

/// Errors raised by the solvers, validators and verification suites.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{branch} Hamiltonian is not convex in v1: smallest curvature eigenvalue {min_eigenvalue:.3e}")]
    NotConvex { branch: &'static str, min_eigenvalue: f64 },

    #[error("{branch} Hamiltonian is not concave in v2: largest curvature eigenvalue {max_eigenvalue:.3e}")]
    NotConcave { branch: &'static str, max_eigenvalue: f64 },

    #[error("objective is unbounded below on the search region")]
    Unbounded,

    #[error("saddle iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("solution blew up at node {node}: |P| = {value:.6e} exceeds guard {threshold:.6e}")]
    BlowUp { node: usize, value: f64, threshold: f64 },

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("at {location}: {source}")]
    At {
        location: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at(self, location: impl Into<String>) -> Self {
        Error::At {
            location: location.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping location wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::At { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors produced by a numerical solver rather than bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self.root(),
            Error::NotConvex { .. }
                | Error::NotConcave { .. }
                | Error::Unbounded
                | Error::Convergence { .. }
                | Error::BlowUp { .. }
                | Error::Numeric(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
