use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}:{line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },
    #[error("invalid language code {0:?}")]
    InvalidLang(String),
    #[error("unknown language {0}")]
    UnknownLanguage(String),
    #[error("invalid profile {code}: {message}")]
    InvalidProfile { code: String, message: String },
    #[error("duplicate mapping rule for {codepoint} at position {position}")]
    DuplicateRule { codepoint: String, position: String },
    #[error("invalid mapping table {source_lang}->{target_lang}: {message}")]
    InvalidMapping {
        source_lang: String,
        target_lang: String,
        message: String,
    },
    #[error("invalid noise level {0}")]
    InvalidNoiseLevel(u32),
    #[error("no mapping table for language {0}")]
    NoMappingTable(String),
    #[error("not an ASCII digit: {0:?}")]
    NotADigit(char),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("invalid n-gram spec: {0}")]
    NgramSpec(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("label {0} is not known to the model")]
    UnknownLabel(String),
    #[error("invalid cluster set: {0}")]
    Clusters(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("unsupported model format version {found} (expected {expected})")]
    UnsupportedVersion { found: u16, expected: u16 },
    #[error("model stores {found}-byte floats, expected {expected}")]
    ScalarMismatch { found: u8, expected: u8 },
    #[error("evaluation: {0}")]
    Evaluation(String),
    #[error("external predictor: {0}")]
    External(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            line,
            message: message.into(),
        }
    }
}
