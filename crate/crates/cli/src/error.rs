use serde::Serialize;
use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Usage,
    Io,
    Schema,
    Numeric,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 2,
            Kind::Io => 3,
            Kind::Schema => 4,
            Kind::Numeric => 5,
        }
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Kind::Usage, message)
    }

    /// Attach the offending path to the message.
    pub fn at(mut self, path: &std::path::Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }

    /// The structured report written to stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "exit_code": self.kind.exit_code(),
            "message": self.message,
        })
        .to_string()
    }
}

impl From<ghp_core::Error> for CliError {
    fn from(e: ghp_core::Error) -> Self {
        use ghp_core::Error as E;
        let kind = match &e {
            E::Config(_) => Kind::Usage,
            E::Io(_) => Kind::Io,
            E::Domain(_) | E::Input(_) | E::Parse(_) => Kind::Schema,
            E::NotStationary(_) | E::DegenerateLikelihood(_) | E::KernelUnderflow { .. } => Kind::Numeric,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(Kind::Io, e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::new(Kind::Schema, e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::new(Kind::Io, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
