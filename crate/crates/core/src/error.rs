use thiserror::Error;

/// Errors raised by generation, theory, estimation and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value lies outside its declared domain.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called with arguments that violate its precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The input filter produces a numerically singular regressor covariance.
    #[error("degenerate filter: Sigma is numerically singular (min eigenvalue {min_eig:e}, max eigenvalue {max_eig:e})")]
    DegenerateFilter { min_eig: f64, max_eig: f64 },

    /// The regressor matrix does not have full column rank.
    #[error("rank-deficient regressor matrix: pivot {pivot} has magnitude {magnitude:e} below {threshold:e} (relative to largest pivot)")]
    RankDeficient {
        pivot: usize,
        magnitude: f64,
        threshold: f64,
    },

    /// A matrix that must be symmetric positive definite is not.
    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: String },

    /// The kernel matrix is singular while a positive noise variance is supplied.
    #[error("kernel matrix P is singular; use a positive definite kernel when sigma2 > 0")]
    SingularKernel,

    /// Distributional checks were requested with too few replications.
    #[error("insufficient replications: {got} < {required} required for {check}")]
    InsufficientReplications {
        check: String,
        got: usize,
        required: usize,
    },

    /// A failure inside one Monte Carlo replication.
    #[error("replication {rep} at N={n_samples}: {source}")]
    Replication {
        n_samples: usize,
        rep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("worker pool: {0}")]
    WorkerPool(String),
}

pub type Result<T> = std::result::Result<T, Error>;
