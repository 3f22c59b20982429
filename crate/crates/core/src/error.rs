//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("degree {got} too small, need at least {required}")]
    DegreeTooSmall { required: usize, got: usize },

    #[error("permutation must be even: {0}")]
    OddPermutation(String),

    #[error("permutation must fix the spine point: {0}")]
    SpineNotFixed(String),

    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),

    #[error("invalid valency sequence: {0}")]
    InvalidValencies(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("element is not a member of the target set")]
    NotMember,

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
