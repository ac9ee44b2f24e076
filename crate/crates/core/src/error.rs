use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum KacError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("velocity dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("scattering direction is not a unit vector (norm {norm})")]
    NonUnitSigma { norm: f64 },

    #[error("degenerate velocity sample: all velocities coincide")]
    DegenerateSample,

    #[error("need at least {min} particles, got {found}")]
    TooFewParticles { min: usize, found: usize },

    #[error("empty measure")]
    EmptyMeasure,

    #[error("measure has negative weights where a nonnegative one is required")]
    SignedMeasure,

    #[error("total masses differ: {0} vs {1}")]
    MassMismatch(f64, f64),

    #[error("support size {size} exceeds the LP cap {cap}")]
    SupportCapExceeded { size: usize, cap: usize },

    #[error("environment does not cover time {0}")]
    EnvironmentRange(f64),

    #[error("min-cost flow solver failed: {0}")]
    Solver(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl KacError {
    /// Short machine-readable tag used in structured error output.
    #[must_use]
    pub fn kind(&self) -> &'static str {
        match self {
            Self::DimensionMismatch { .. } => "dimension_mismatch",
            Self::DimensionTooSmall(_) => "dimension_too_small",
            Self::NonUnitSigma { .. } => "non_unit_sigma",
            Self::DegenerateSample => "degenerate_sample",
            Self::TooFewParticles { .. } => "too_few_particles",
            Self::EmptyMeasure => "empty_measure",
            Self::SignedMeasure => "signed_measure",
            Self::MassMismatch(..) => "mass_mismatch",
            Self::SupportCapExceeded { .. } => "support_cap_exceeded",
            Self::EnvironmentRange(_) => "environment_range",
            Self::Solver(_) => "solver",
            Self::InvalidArgument(_) => "invalid_argument",
            Self::Config(_) => "config",
            Self::Parse(_) => "parse",
            Self::Io(_) => "io",
            Self::Csv(_) => "csv",
            Self::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, KacError>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(KacError::DimensionMismatch { expected, found })
    }
}
