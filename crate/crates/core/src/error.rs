use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Oracle,
    Estimation,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: missing required column `{column}`")]
    MissingColumn { column: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("sizing error: {0}")]
    Sizing(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("response format error: {reason} (raw response: {raw:?})")]
    ResponseFormat { reason: String, raw: String },

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("persona format error for respondent {respondent}: {}", .problems.join("; "))]
    PersonaFormat { respondent: String, problems: Vec<String> },

    #[error("persona inference failed for {failed} of {total} panels (above the 10% limit); revise the expert prompt")]
    InferenceBatch { failed: usize, total: usize },

    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),

    #[error("M-step stalled: no positive E-step weights; increase L or change the seed")]
    Stall,

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::ResponseFormat { .. } | Error::Transport { .. } | Error::InferenceBatch { .. } => ErrorClass::Oracle,
            Error::DegenerateEmbedding(_) | Error::Stall | Error::Estimation(_) => ErrorClass::Estimation,
            _ => ErrorClass::Data,
        }
    }
}
