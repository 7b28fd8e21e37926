use thiserror::Error;

/// Errors raised by geometry, simulation, estimation and harness code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("time {t} is beyond the usable horizon {limit} of the flow")]
    HorizonExceeded { t: f64, limit: f64 },

    #[error("point is off the manifold (constraint defect {defect:.3e})")]
    OffManifold { defect: f64 },

    #[error("points are on the cut locus; the minimal geodesic is not unique")]
    CutLocusAmbiguity,

    #[error("no minimal geodesic between the given points")]
    NoMinimizer,

    #[error("frame is not orthonormal for the current metric (defect {defect:.3e})")]
    FrameNotOrthonormal { defect: f64 },

    #[error("frame is rank deficient")]
    DegenerateFrame,

    #[error("finite-difference stencil leaves the chart domain")]
    StencilOutOfDomain,

    #[error("non-finite coordinate encountered at step {step}")]
    NumericalBlowup { step: usize },

    #[error("scalar field `{0}` has no gradient oracle")]
    MissingGradient(String),

    #[error("degenerate time interval: s = t = {0}")]
    DegenerateInterval(f64),

    #[error("radius {radius} is not below the cut margin {margin}")]
    RadiusTooLarge { radius: f64, margin: f64 },

    #[error("nested Monte Carlo budget exceeded: {requested} inner paths > limit {limit}")]
    NestedBudgetExceeded { requested: usize, limit: usize },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("field must be strictly positive (infimum {0})")]
    NonPositiveField(f64),

    #[error("field must be bounded below by one (infimum {0})")]
    FieldBelowOne(f64),

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    ConfigInvalid(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
