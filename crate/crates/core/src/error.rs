use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Model data violates a structural requirement (Hermiticity of h,
    /// symmetry of Δ, bad dimensions, unknown parameter, ...).
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// An entry magnitude crossed the overflow guard: the computation is in
    /// the deep unstable regime and results would no longer be meaningful.
    #[error("numeric range exceeded: {0}")]
    Range(String),

    /// An eigen/linear solver failed or a matrix was too ill-conditioned.
    #[error("linear algebra failure: {0}")]
    Linalg(String),

    /// A mathematically guaranteed property failed far beyond roundoff,
    /// indicating an internal bug rather than a user error.
    #[error("internal consistency violation: {0}")]
    Inconsistency(String),

    /// Requested operation needs preconditions the input does not satisfy
    /// (off the EP manifold, t beyond schedule, ambiguous clustering, ...).
    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
