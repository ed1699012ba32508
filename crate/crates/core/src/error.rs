//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad input: shapes, labels, parameter ranges, non-finite values.
    #[error("validation error: {0}")]
    Validation(String),

    /// A kernel matrix degenerated (all points coincide, zero Frobenius
    /// norm, non-positive diagonal, ...). Carries the kernel name when known.
    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    /// All per-kernel weight norms vanished, so no mixing update exists.
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// Block-norm update hit a zero weight norm (inverse powers blow up).
    #[error("singular block-norm update: {0}")]
    SingularUpdate(String),

    /// The dual solver hit its iteration cap. The best iterate is attached.
    #[error("SVM solver did not converge: max KKT violation {violation:.3e} after {iterations} working-set steps")]
    SvmNonConvergence {
        violation: f64,
        iterations: usize,
        best: Box<crate::svm::SvmSolution>,
    },

    /// MKL training hit its outer-iteration cap. The best model is attached.
    #[error("MKL training did not converge: duality gap {gap:.3e} after {outer} outer iterations")]
    MklNonConvergence {
        gap: f64,
        outer: usize,
        best: Box<crate::mkl::MklModel>,
    },

    /// The primal objective kept increasing across a mixing update even
    /// after escalating the inner SVM precision.
    #[error("training stalled: primal objective increased by {increase:.3e} after {escalations} precision escalations")]
    Stall { increase: f64, escalations: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed kernel, label, or model file.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
