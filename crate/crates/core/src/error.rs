use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("no descent after {iterations} iterations (energy {energy})")]
    Stagnation { iterations: usize, energy: f64, trace: Vec<f64>, last: Vec<f64> },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("overlapping intervals: {0}")]
    Overlap(String),

    #[error("under-resolved: {0}")]
    UnderResolved(String),

    #[error("not admissible: {0}")]
    NotAdmissible(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_stagnation(&self) -> bool {
        matches!(self.root(), Error::Stagnation { .. })
    }

    /// The innermost error below any stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
