use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shooting bracket [{lo}, {hi}] does not separate undershoot from overshoot")]
    NoBracket { lo: f64, hi: f64 },
    #[error("profile tail not decayed: |w(R)| = {value:.3e} >= {tol:.1e}")]
    TailNotDecayed { value: f64, tol: f64 },
    #[error("field has zero L2 norm")]
    ZeroField,
    #[error("{what} did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { what: String, iters: usize, residual: f64 },
    #[error("right-hand side {name} is not orthogonal to the kernel: ratios ({r1:.3e}, {r2:.3e})")]
    NotSolvable { name: String, r1: f64, r2: f64 },
    #[error("singular 2x2 system ({0})")]
    SingularSystem(String),
    #[error("operation applies to case {expected}, got {actual}")]
    WrongCase { expected: String, actual: String },
    #[error("a = {a} is at or above the collapse threshold a* = {a_star}")]
    Collapse { a: f64, a_star: f64 },
    #[error("grid too coarse: eps/(lambda dx) = {cells:.2} < {required}")]
    GridTooCoarse { cells: f64, required: f64 },
    #[error("ball of radius {radius} around ({cx:.3}, {cy:.3}) leaves the grid")]
    BallOutsideGrid { radius: f64, cx: f64, cy: f64 },
    #[error("need at least {needed} sweep points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("profile cache: {0}")]
    Cache(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
