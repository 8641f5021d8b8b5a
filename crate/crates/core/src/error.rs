use thiserror::Error;

use crate::data::DataError;
use crate::eval::EvalError;
use crate::glm::GlmError;
use crate::io::IoError;
use crate::model_spec::SpecError;
use crate::select::SelectError;
use crate::sim::SimError;
use crate::weighting::WeightingError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error. Each variant records the module the failure came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Weighting(#[from] WeightingError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("invalid fitted model: {0}")]
    Model(String),
    #[error("configuration: {0}")]
    Config(String),
}

impl Error {
    /// Name of the module the error originated in.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Data(_) => "data",
            Error::Glm(_) => "glm",
            Error::Spec(_) => "model_spec",
            Error::Weighting(_) => "weighting",
            Error::Eval(_) => "eval",
            Error::Select(_) => "select",
            Error::Sim(_) => "sim",
            Error::Io(_) => "io",
            Error::Model(_) => "fit",
            Error::Config(_) => "cli",
        }
    }
}
