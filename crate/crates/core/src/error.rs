use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid field parameters: {0}")]
    Field(String),
    #[error("theta is undefined for GF({p}^{e}): extension degree must be even")]
    ThetaUndefined { p: u32, e: u32 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("invalid form parameters: {0}")]
    Form(String),
    #[error("Witt precondition violated: {0}")]
    Witt(String),
    #[error("not an isometry of the space")]
    NotIsometry,
    #[error("descriptor parse error: {0}")]
    Parse(String),
    #[error("group too large for enumeration: estimated order {0}")]
    TooLarge(String),
    #[error("invalid word: {0}")]
    Word(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
}

pub type Result<T> = std::result::Result<T, Error>;
