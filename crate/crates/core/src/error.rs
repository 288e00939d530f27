use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error(
        "spin system too large: {nuclei} nuclei requested, at most {max} supported \
         (Hilbert dimension limit {max_dim})"
    )]
    DimensionOverflow {
        nuclei: usize,
        max: usize,
        max_dim: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max |H - H†| = {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("matrix is not unitary (max |U†U - 1| = {defect:e})")]
    NotUnitary { defect: f64 },

    #[error("requested sample time {requested} µs lies beyond program end {end} µs")]
    SampleOutOfRange { requested: f64, end: f64 },

    #[error("Bessel argument {0} outside the supported domain |x| <= 100")]
    BesselDomain(f64),

    #[error("grid point {index} (x = {x}): {source}")]
    GridPoint {
        index: usize,
        x: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
