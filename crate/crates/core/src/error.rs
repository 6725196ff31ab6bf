//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not hermitean: |A[{row},{col}] - conj(A[{col},{row}])| = {deviation:.3e} exceeds tolerance {tolerance:.3e}")]
    NotHermitian {
        row: usize,
        col: usize,
        deviation: f64,
        tolerance: f64,
    },

    #[error("invalid spin: {0}")]
    InvalidSpin(String),

    #[error("product rank {rank} exceeds 2s = {max} (linearly dependent on lower ranks)")]
    RankTooHigh { rank: usize, max: usize },

    #[error("invalid component index {0}: must be 1, 2 or 3")]
    InvalidComponent(u8),

    #[error("basis construction failed: rank-{rank} class produced {got} independent elements, expected {expected}")]
    BasisConstruction {
        rank: usize,
        got: usize,
        expected: usize,
    },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {offdiag:.3e})")]
    Convergence { sweeps: usize, offdiag: f64 },

    #[error("state vector is not normalized: |norm - 1| = {0:.3e}")]
    NotNormalized(f64),

    #[error("zero vector where a unit vector is required")]
    ZeroVector,

    #[error("density matrix invalid: {0}")]
    InvalidDensityMatrix(String),

    #[error("eigenspace index {index} out of range (spectrum has {len} eigenspaces)")]
    EigenspaceOutOfRange { index: usize, len: usize },

    #[error("field construction rejected: k.B0 = {dot:.3e} violates the transversality bound {bound:.3e}")]
    FieldNotTransverse { dot: f64, bound: f64 },

    #[error("only the spin-1/2 case is supported here (got N = {0})")]
    NotSpinHalf(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
