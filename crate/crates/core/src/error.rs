use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is singular or numerically rank-deficient")]
    Singular,

    #[error("eigenvalue iteration did not converge")]
    EigenNoConvergence,

    #[error("not a density: alpha (-T)^-1 s = {normalization} (expected 1 within {tol})")]
    NotADensity { normalization: f64, tol: f64 },

    #[error("T is not stable: dominant eigenvalue {sigma0} is not strictly negative")]
    UnstableT { sigma0: f64 },

    #[error(
        "T has a positive diagonal entry t[{index}][{index}] = {value}; \
         the sign split T = T+ - T- only holds for nonpositive diagonals"
    )]
    PositiveDiagonal { index: usize, value: f64 },

    #[error("lambda = {lambda} is below the admissible threshold {threshold}")]
    LambdaTooSmall { lambda: f64, threshold: f64 },

    #[error("doubled states are not transient at lambda = {lambda} (abscissa {abscissa})")]
    NotTransient { lambda: f64, abscissa: f64 },

    #[error("initial vector alpha is identically zero")]
    ZeroAlpha,

    #[error("x must be nonnegative, got {0}")]
    NegativeX(f64),

    #[error("density is materially negative ({value}) at x = {x}; invalid ME triple")]
    NegativeDensity { x: f64, value: f64 },

    #[error("no outcomes to estimate from")]
    EmptyOutcomes,

    #[error("weight function is not finite at tau = {0}")]
    NonFiniteWeight(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("number of paths must be positive")]
    ZeroPaths,
}
