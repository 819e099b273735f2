use thiserror::Error;

/// Errors produced by the combination engine.
#[derive(Error, Debug)]
pub enum CombineError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("panel validation failed:\n{}", .issues.join("\n"))]
    Validation { issues: Vec<String> },

    #[error("grid point {point} lies outside the basis support [{lo}, {hi}]")]
    OutsideSupport { point: f64, lo: f64, hi: f64 },

    #[error("singular smoothing system: {0}; consider a positive penalty lambda")]
    SingularSystem(String),

    #[error("learner state became non-finite at step {step}: {detail}")]
    DivergedState { step: usize, detail: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("data format error at line {line}: {msg}")]
    Format { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, CombineError>;
