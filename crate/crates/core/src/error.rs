use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants map one-to-one onto the numeric codes used by the C interface,
/// see [`Error::code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {left} reference vectors vs {right} observed vectors")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("series did not converge within {0} terms")]
    NonConvergence(usize),

    #[error("singular basis (|det| = {0:e})")]
    SingularBasis(f64),

    #[error("point ({x}, {y}) lies outside the ball disk of radius {r}")]
    OutsideDisk { x: f64, y: f64, r: f64 },

    #[error("too few dots: got {got}, need at least {need}")]
    TooFewDots { got: usize, need: usize },

    #[error("no candidate basis passed the recognition threshold")]
    NoBasisAboveThreshold,

    #[error("empty correspondence set")]
    EmptyCorrespondences,

    #[error("could not place {n} dots with separation {min_separation} rad after {attempts} attempts")]
    InfeasibleSeparation {
        n: usize,
        min_separation: f64,
        attempts: usize,
    },

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("rotation plane is ill-defined (sigma2/sigma3 = {ratio:.3})")]
    NonUniqueAxis { ratio: f64 },

    #[error("no model reached {min_inliers} inliers")]
    NoConsensus { min_inliers: usize },

    #[error("spin norm {value} at t = {t} is not positive")]
    NonPositiveNorm { t: f64, value: f64 },

    #[error("timestamps must be strictly increasing (index {0})")]
    NonMonotonicTime(usize),

    #[error("{context}: {message}")]
    Format { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Format {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// Stable numeric code; 0 is reserved for success.
    pub fn code(&self) -> i32 {
        match self {
            Error::LengthMismatch { .. } => 1,
            Error::DegenerateConfiguration(_) => 2,
            Error::InvalidParams(_) => 3,
            Error::NonConvergence(_) => 4,
            Error::SingularBasis(_) => 5,
            Error::OutsideDisk { .. } => 6,
            Error::TooFewDots { .. } => 7,
            Error::NoBasisAboveThreshold => 8,
            Error::EmptyCorrespondences => 9,
            Error::InfeasibleSeparation { .. } => 10,
            Error::TooFewSamples { .. } => 11,
            Error::NonUniqueAxis { .. } => 12,
            Error::NoConsensus { .. } => 13,
            Error::NonPositiveNorm { .. } => 14,
            Error::NonMonotonicTime(_) => 15,
            Error::Format { .. } => 16,
            Error::Io(_) => 17,
        }
    }
}
