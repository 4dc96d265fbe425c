use thiserror::Error;

/// Errors produced across the inversion pipeline.
///
/// Variants that signal an inadmissible reduced model (`SpectralValidity`,
/// `Inadmissible`, `Breakdown`) are recoverable: the data-fitting driver
/// reacts to them by lowering the model size `m`.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("resistivity must be positive, found {value} at index {index}")]
    NonPositive { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid segment: {0}")]
    InvalidSegment(String),

    #[error("explicit Euler step {step:e} exceeds the stability bound {bound:e}")]
    Unstable { step: f64, bound: f64 },

    #[error("shift {shift} is not in the resolvent set: {reason}")]
    SingularShift { shift: f64, reason: String },

    #[error("empty time series")]
    EmptySeries,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rational fit failed: {0}")]
    Fit(String),

    #[error("reduced model is not a Stieltjes function (index {index}): {reason}")]
    SpectralValidity { index: usize, reason: String },

    #[error("continued fraction coefficient {which}_{index} = {value:e} is not admissible")]
    Inadmissible {
        which: &'static str,
        index: usize,
        value: f64,
    },

    #[error("Lanczos breakdown at step {step}: beta = {beta:e}")]
    Breakdown { step: usize, beta: f64 },

    #[error("Krylov basis collapsed at column {column}; try a smaller m")]
    BasisCollapse { column: usize },

    #[error("eigenvalue gap {gap:e} too small for a simple-eigenvalue derivative")]
    Degenerate { gap: f64 },

    #[error("data cannot support any reduced model (m reached 0)")]
    DataUnusable,

    #[error("positivity guard exhausted after {halvings} step halvings")]
    StepFailure { halvings: usize },

    #[error("regularization solve failed: {0}")]
    Regularization(String),
}

impl Error {
    /// True for failures that a smaller reduced model may avoid.
    pub fn is_inadmissible(&self) -> bool {
        matches!(
            self,
            Error::SpectralValidity { .. }
                | Error::Inadmissible { .. }
                | Error::Breakdown { .. }
                | Error::Fit(_)
                | Error::Degenerate { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
