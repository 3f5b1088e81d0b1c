use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by model construction, generator assembly and rate extraction.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid Stevens term O_{l}^{m}: need l in {{2,4,6}} and |m| <= l")]
    InvalidTerm { l: i32, m: i32 },
    #[error("unsupported Stevens rank l = {0}; only ranks up to 6 are tabulated")]
    UnsupportedRank(i32),
    #[error("invalid angular momentum: 2J = {0} (need 2J >= 1)")]
    InvalidAngularMomentum(u32),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not Hermitian: max |A - A^H| = {deviation:e} exceeds {tolerance:e}")]
    NotHermitian { deviation: f64, tolerance: f64 },
    #[error("internal consistency error: {0}")]
    Internal(String),
    #[error("eigensolver did not converge on a {dim}x{dim} matrix (1-norm {norm:e})")]
    EigenNonConvergence { dim: usize, norm: f64 },
    #[error("phonon frequency must be strictly positive, got {0} cm^-1")]
    InvalidMode(f64),
    #[error("temperature must be strictly positive, got {0} K")]
    InvalidTemperature(f64),
    #[error("invalid broadening policy: {0}")]
    InvalidBroadening(String),
    #[error(
        "singular T-matrix denominator (intermediate {intermediate}, initial {initial}, mode {mode}); \
         use a nonzero regularizer"
    )]
    SingularDenominator {
        intermediate: usize,
        initial: usize,
        mode: usize,
    },
    #[error("operator basis does not match the eigensystem used for the generator")]
    BasisMismatch,
    #[error("negative Lindblad weight {0:e}")]
    NegativeWeight(f64),
    #[error("no generator eigenvector overlaps the doublet population difference by >= 0.5 (best {best:.3})")]
    AmbiguousEigenvector {
        best: f64,
        /// (eigenvalue, overlap) for every non-stationary eigenspace of the block.
        overlaps: Vec<(Complex64, f64)>,
    },
    #[error("density matrix lost positivity at t = {time:e} s (min eigenvalue {min_eigenvalue:e})")]
    PositivityViolation { time: f64, min_eigenvalue: f64 },
    #[error("trace drift {drift:e} at t = {time:e} s")]
    TraceViolation { time: f64, drift: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
