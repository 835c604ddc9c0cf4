use thiserror::Error;

/// Errors shared by every module of the crate.
///
/// Mathematical property failures are not errors: they come back as reports
/// with a `passed` flag and a witness. Errors are reserved for bad input and
/// exhausted resource budgets.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("resource limit: {0}")]
    Resource(String),

    /// A kernel that was required to be conditionally negative definite is not.
    #[error("kernel is not conditionally negative definite (extremal value {extremal_value:e}, tolerance {threshold:e})")]
    NotCnd {
        extremal_value: f64,
        threshold: f64,
        witness: Vec<f64>,
    },

    #[error("inconsistent eigenvalue {eigenvalue:e} below cutoff -{cutoff:e}")]
    Inconsistent { eigenvalue: f64, cutoff: f64 },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn resource(msg: impl Into<String>) -> Self {
        Error::Resource(msg.into())
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors that map to the "input/resource" exit status of the CLI.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::NotCnd { .. } | Error::Inconsistent { .. } => false,
            Error::Stage { source, .. } => source.is_usage(),
            _ => true,
        }
    }
}
