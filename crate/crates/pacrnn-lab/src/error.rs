use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {detail}")]
    Dimension { context: String, detail: String },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    #[error("label error at {context}: {detail}")]
    Label { context: String, detail: String },

    #[error("state error: {0}")]
    State(String),

    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("language spec error: {0}")]
    Spec(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("io error on {path}: {source}")]
    File { path: String, source: std::io::Error },
}

impl Error {
    pub(crate) fn dimension(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dimension { context: context.into(), detail: detail.into() }
    }

    pub(crate) fn parameter(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter { name: name.into(), reason: reason.into() }
    }

    pub(crate) fn label(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Label { context: context.into(), detail: detail.into() }
    }

    pub(crate) fn format(offset: u64, detail: impl Into<String>) -> Self {
        Error::Format { offset, detail: detail.into() }
    }

    /// Attaches `path` to a bare io error; other errors pass through.
    pub fn at_path(self, path: &std::path::Path) -> Self {
        match self {
            Error::Io(source) => Error::File { path: path.display().to_string(), source },
            e => e,
        }
    }

    /// Short machine-readable class used by the command-line front end.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Parameter { .. } => "parameter",
            Error::Label { .. } => "label",
            Error::State(_) => "state",
            Error::Format { .. } => "format",
            Error::Data(_) => "data",
            Error::Config(_) => "config",
            Error::Spec(_) => "spec",
            Error::Io(_) | Error::File { .. } => "io",
        }
    }
}
