use thiserror::Error;

#[derive(Debug, Error)]
pub enum KkError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("basis is linearly dependent (smallest Gram singular value {sigma:.3e})")]
    DependentBasis { sigma: f64 },
    #[error("identity is not in the span (residual {residual:.3e})")]
    NotUnital { residual: f64 },
    #[error("not closed under multiplication: basis pair ({i},{j}) has residual {residual:.3e}")]
    NotClosedUnderMultiplication { i: usize, j: usize, residual: f64 },
    #[error("algebra is not selfadjoint (adjoint residual {residual:.3e})")]
    NotSelfadjoint { residual: f64 },
    #[error("no block structure available (algebra not multi-matrix)")]
    NoBlockStructure,
    #[error("singular operator (smallest singular value {sigma:.3e})")]
    Singular { sigma: f64 },
    #[error("matrix is not a member of the algebra (residual {residual:.3e})")]
    NotMember { residual: f64 },
    #[error("map is not a derivation (Leibniz residual {residual:.3e})")]
    NotADerivation { residual: f64 },
    #[error("representations have different source algebras")]
    SourceMismatch,
    #[error("similarity is numerically singular (smallest singular value {sigma:.3e})")]
    NotInvertible { sigma: f64 },
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("iteration stalled: defect {defect:.3e} after {iters} steps")]
    MaxIterExceeded { iters: usize, defect: f64 },
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("bad block sizes: {0}")]
    BadBlockSizes(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
}

pub type Result<T> = std::result::Result<T, KkError>;
