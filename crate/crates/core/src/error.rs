use thiserror::Error;

/// Errors raised by the sensitivity-analysis pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("conditioning set is singular: pivot {pivot:e} below tolerance {tol:e}")]
    SingularConditioningSet { pivot: f64, tol: f64 },
    #[error("degenerate denominator in {0}")]
    DegenerateDenominator(&'static str),
    #[error("role mismatch: {0}")]
    RoleMismatch(String),
    #[error("sensitivity model declares no bounds")]
    EmptyModel,
    #[error("constraint set is empty before optimization: {0}")]
    InfeasibleAtCompile(String),
    #[error("an instrument role is required for this quantity")]
    InstrumentMissing,
    #[error("weak instrument: |R(D~Z|X)| = {0:e}")]
    WeakInstrument(f64),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("sensitivity model is infeasible on the full sample")]
    ModelInfeasibleOnSample,
    #[error("BCa interval undefined: {0}")]
    DegenerateBca(String),
    #[error("invalid covariance matrix: {0}")]
    InvalidCovariance(String),
    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },
    #[error("column `{0}` is not numeric")]
    NonNumericColumn(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
