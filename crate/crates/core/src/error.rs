use thiserror::Error;

/// Errors raised across the recovery pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-differentiable node {node} in loss graph: {reason}")]
    NonDifferentiable { node: usize, reason: String },

    #[error("CFL condition violated: dt = {dt} exceeds the stable limit {max_dt}")]
    Cfl { dt: f64, max_dt: f64 },

    #[error("non-finite gradient in {term}")]
    NonFiniteGradient { term: String },

    #[error("training diverged at epoch {epoch}: total loss {loss:e} exceeds {limit:e}")]
    Diverged { epoch: usize, loss: f64, limit: f64 },

    #[error("SVT diverged with delta = {delta}: residual grew from {initial:e} to {current:e}")]
    SvtDiverged { delta: f64, initial: f64, current: f64 },

    #[error("location ({i}, {j}) is not usable for finite differences: {reason}")]
    Stencil { i: usize, j: usize, reason: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unknown preset {0:?}")]
    UnknownPreset(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
