//! CLI-level error: a stable code plus a single-line detail.

use depthguard_core::Error as CoreError;

#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub detail: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(code: &'static str, detail: impl Into<String>) -> CliError {
        CliError {
            code,
            detail: detail.into(),
        }
    }

    pub fn usage(detail: impl Into<String>) -> CliError {
        CliError::new("usage", detail)
    }

    pub fn config(detail: impl Into<String>) -> CliError {
        CliError::new("config", detail)
    }

    /// Single line, safe for `error: <code>: <detail>`.
    pub fn one_line_detail(&self) -> String {
        self.detail.replace('\n', "; ")
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> CliError {
        CliError {
            code: e.code(),
            detail: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError {
            code: "io",
            detail: e.to_string(),
        }
    }
}
