use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not a projector: {0}")]
    NotProjector(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("polynomials are defined over different variable lists")]
    VariableMismatch,

    #[error("infeasible instance: {0}")]
    Infeasible(String),

    #[error("core indicator fit failed: sup deviation {achieved:.4e} on [-delta, delta] exceeds delta = {delta}")]
    IndicatorFit { achieved: f64, delta: f64 },

    #[error("relaxation degree {degree} is too low for constraint row `{row}` (needs {required})")]
    DegreeTooLow {
        row: String,
        degree: usize,
        required: usize,
    },

    #[error("moment matrix side {side} exceeds the guard of {limit}")]
    BasisOverflow { side: usize, limit: usize },

    #[error("solver did not converge in {iterations} iterations (primal residual {primal:.3e})")]
    NonConvergence {
        iterations: usize,
        primal: f64,
        trace: Vec<f64>,
    },

    #[error("solver residual plateaued at {residual:.3e}; the system looks infeasible")]
    InfeasibleSdp { residual: f64, trace: Vec<f64> },

    #[error("solver exceeded its wall-clock budget of {seconds:.1} s")]
    Timeout { seconds: f64 },

    #[error("pseudo-expectation of the reweighting polynomial is {value:.3e}")]
    DegenerateReweight { value: f64 },

    #[error("degenerate pseudo-distribution: {0}")]
    DegeneratePseudo(String),

    #[error("candidate list is empty")]
    EmptyList,

    #[error("enumeration guard exceeded: {0}")]
    EnumerationGuard(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
