use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cookie law: {0}")]
    InvalidLaw(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("all {0} samples are censored")]
    AllCensored(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(
        "acceptance rate {rate:.2e} after {proposals} proposals is below {min:.0e}; \
         increase the run budget or the level cap"
    )]
    LowAcceptance { rate: f64, proposals: u64, min: f64 },
    #[error("concentration bound violated at x={x}, y={y}: {lhs:e} > {bound:e}")]
    BoundViolation { x: u32, y: u32, lhs: f64, bound: f64 },
    #[error("non-finite value in diffusion path at t={t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
