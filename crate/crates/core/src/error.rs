use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("bad magic: expected \"DSFT\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported DSFT version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated payload: expected {expected} values, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("image of {rows}x{cols} is smaller than one {patch}x{patch} patch")]
    SmallerThanPatch { rows: usize, cols: usize, patch: usize },

    #[error("eigensolver did not converge within {iterations} iterations (worst residual {worst_residual:e})")]
    NonConvergence { iterations: usize, residuals: Vec<f64>, worst_residual: f64 },

    #[error("problem of size {n} exceeds the cap of {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("need at least {needed} points to form {needed} clusters, got {available}")]
    TooFewPoints { needed: usize, available: usize },

    #[error("missing descriptor sidecar: {0}")]
    MissingSidecar(String),
}
