use thiserror::Error;

use crate::space::Point;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("space mismatch: point tagged {found} used with {expected} space")]
    SpaceMismatch { expected: String, found: String },

    #[error("domain error: {0}")]
    Domain(String),

    /// A point left the domain of a form during integration or projection.
    #[error("domain escape at base {base:?}, argument {arg:?}, flow time {time}")]
    DomainEscape { base: Point, arg: Point, time: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("regularity not certified: {0}")]
    NotCertified(String),

    #[error("resource guard: {0}")]
    Resource(String),

    /// Pointwise field intersection came out empty where the base point was required.
    #[error("empty intersection at {at:?}")]
    EmptyIntersection { at: Point },

    #[error("pipeline stage `{stage}` failed: {source}")]
    PipelineStage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("root bracketing failed on [{lo}, {hi}]: f(lo)={flo:e}, f(hi)={fhi:e}")]
    NoBracket { lo: f64, hi: f64, flo: f64, fhi: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::PipelineStage { stage, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
