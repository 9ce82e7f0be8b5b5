//! Shared error type for the capacity pipeline.

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("disks overlap: |w[{i}] - w[{j}]| = {dist:.6e} <= 2r = {two_r:.6e}")]
    DiskOverlap {
        i: usize,
        j: usize,
        dist: f64,
        two_r: f64,
    },

    #[error("centrosymmetry violated at index {index}: residual {residual:.3e} > {tol:.1e}")]
    SymmetryViolation {
        index: usize,
        residual: f64,
        tol: f64,
    },

    #[error("coincident points at indices {i} and {j}")]
    CoincidentPoints { i: usize, j: usize },

    #[error(
        "summation accuracy {requested:.3e} is not achievable: expansion order would exceed {max_order}"
    )]
    AccuracyUnachievable { requested: f64, max_order: usize },

    #[error("dense size cap exceeded: {size} > {cap}")]
    DenseCapExceeded { size: usize, cap: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "preconditioner block exponent j = {j} out of range for level k = {k} (need 1 <= j <= k-1)"
    )]
    BlockExponentRange { j: usize, k: usize },

    #[error("preconditioner block size {d} does not divide vector length {len}")]
    BlockSizeMismatch { d: usize, len: usize },

    #[error("singular diagonal block in preconditioner factorization")]
    SingularBlock,

    #[error("structure check failed: {0}")]
    StructureViolation(String),

    #[error("degenerate solution: e^T y = {0:.6e} is not positive")]
    DegenerateSolution(f64),

    #[error("differences change sign between indices {i} and {j}; sequence is not geometric")]
    MixedSignDifferences { i: usize, j: usize },

    #[error("zero difference after level {k}; the sequence has already converged there")]
    ZeroDifference { k: u32 },

    #[error("log-difference fit does not decay: slope {p1:.6e} >= 0")]
    NotDecaying { p1: f64 },

    #[error("need at least {need} values, got {got}")]
    TooFewValues { need: usize, got: usize },

    #[error("levels must be consecutive: got {prev} followed by {next}")]
    NonConsecutiveLevels { prev: u32, next: u32 },

    #[error("extrapolation refuses unconverged input at level {k}")]
    UnconvergedInput { k: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;
