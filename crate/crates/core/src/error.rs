use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("inadmissible geometry: {0}")]
    Inadmissible(String),

    #[error("boundary system is singular or ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("evaluation point ({x}, {y}) is inside an obstacle or too close to a boundary")]
    PointTooClose { x: f64, y: f64 },

    #[error("series did not converge within {cap} terms")]
    SeriesNonConvergence { cap: usize },

    #[error("no detectable object: topological derivative has no negative minimum")]
    NoDetectableObject,

    #[error("degenerate component {index}: radius halved below grid spacing")]
    DegenerateComponent { index: usize },

    #[error("no threshold value produced any component")]
    NoComponents,

    #[error("sampler initialization failed after {attempts} rejected prior draws")]
    SamplerInit { attempts: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}
