use std::fmt;

/// A failed run. The kind decides the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Numeric,
}

impl CliError {
    pub fn config(code: &str, message: impl Into<String>) -> Self {
        CliError { kind: Kind::Config, code: code.into(), message: message.into() }
    }

    pub fn data(code: &str, message: impl Into<String>) -> Self {
        CliError { kind: Kind::Data, code: code.into(), message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Numeric => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<mlfdr::Error> for CliError {
    fn from(e: mlfdr::Error) -> Self {
        let code = e.code();
        let kind = match code.split('.').next() {
            Some("config") => Kind::Config,
            Some("regression") | Some("data") => Kind::Data,
            _ => Kind::Numeric,
        };
        CliError { kind, code: code.into(), message: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn write_error(path: &std::path::Path, e: impl fmt::Display) -> CliError {
    CliError::config("output.write", format!("{}: {e}", path.display()))
}
