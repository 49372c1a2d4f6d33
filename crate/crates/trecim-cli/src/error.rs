use std::fmt;

use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration value; `field` is the dotted path.
    Usage { field: String, message: String },
    /// Configuration text that does not parse.
    Config { path: String, message: String },
    Io { path: String, message: String },
    Model(trecim::Error),
}

impl CliError {
    pub fn usage(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Usage { field: field.into(), message: message.into() }
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: e.to_string() }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage { .. } => "usage",
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Model(_) => "model",
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage { .. } | CliError::Config { .. } => 2,
            CliError::Io { .. } | CliError::Model(_) => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({ "kind": self.kind(), "message": self.to_string() });
        match self {
            CliError::Usage { field, .. } => body["field"] = json!(field),
            CliError::Config { path, .. } | CliError::Io { path, .. } => body["path"] = json!(path),
            CliError::Model(_) => {}
        }
        json!({ "error": body })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage { field, message } => write!(f, "{field}: {message}"),
            CliError::Config { path, message } => write!(f, "{path}: {message}"),
            CliError::Io { path, message } => write!(f, "{path}: {message}"),
            CliError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<trecim::Error> for CliError {
    fn from(e: trecim::Error) -> Self {
        CliError::Model(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
