use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("functions live on different grids")]
    GridMismatch,
    #[error("derivative order {0} is outside 1..=4")]
    DerivativeOrder(u32),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("right-hand side is not orthogonal to Q' (relative projection {0:.3e})")]
    NotOrthogonal(f64),
    #[error("linear solve failed: {0}")]
    SingularSolve(String),
    #[error("degenerate denominator in the model problem: {0:.3e}")]
    DegenerateDenominator(f64),
    #[error("missing lower-order profile set ({0}, {1})")]
    MissingProfile(usize, usize),
    #[error("domain too small: {0}")]
    DomainTooSmall(String),
    #[error("soliton fit diverged: {0}")]
    FitDiverged(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
