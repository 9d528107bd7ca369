use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {name}: requires {constraint}, got {value}")]
    InvalidParameter {
        name: &'static str,
        constraint: &'static str,
        value: String,
    },
    #[error("step budget of {budget} embedded steps exceeded")]
    StepBudgetExceeded { budget: u64 },
    #[error("tree size cap of {cap} vertices exceeded")]
    SizeCapExceeded { cap: u64 },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("horizon mismatch: {0} vs {1}")]
    HorizonMismatch(f64, f64),
    #[error("empty comparison window: lower end {lower} is not below upper end {upper}")]
    DegenerateWindow { lower: f64, upper: f64 },
    #[error("tail table: {0}")]
    Table(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, constraint: &'static str, value: impl ToString) -> Self {
        Error::InvalidParameter {
            name,
            constraint,
            value: value.to_string(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
