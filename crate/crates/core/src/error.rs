use thiserror::Error;

use crate::geo::PlanePoint;
use crate::model::DiscreteMechanism;

#[derive(Debug, Error)]
pub enum LppmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("distance {kind} is not defined for {detail}")]
    MetricDomain { kind: &'static str, detail: String },

    #[error("impossible observation: every prior-weighted likelihood is zero")]
    ImpossibleObservation,

    #[error("geometric median did not converge after {iterations} iterations (best iterate {best:?})")]
    MedianNotConverged { iterations: usize, best: PlanePoint },

    #[error("Blahut-Arimoto did not converge after {iterations} iterations (last change {last_change:e})")]
    BaNotConverged { iterations: usize, last_change: f64, last: Box<DiscreteMechanism> },

    #[error("LP is {0}")]
    LpStatus(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("rejection sampler starved after {0} draws")]
    SamplerStarved(usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, LppmError>;
