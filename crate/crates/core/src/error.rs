use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid interaction: {0}")]
    InvalidInteraction(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("problem too large: {0}")]
    Scale(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("block inversion failed, smallest singular value of 1 - P is {smallest_singular_value:e}")]
    Inversion { smallest_singular_value: f64 },

    #[error("grand-canonical sum diverges: {0}")]
    Divergence(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("logarithm branch ambiguity: {0}")]
    Branch(String),

    #[error("factorization failed: {0}")]
    Factorization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
