//! Run errors and their single-line rendering.

use std::fmt;

/// A failed run: a stable `kind` tag plus a human-readable message.
#[derive(Clone, Debug, PartialEq)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        CliError { kind: kind.into(), message: message.into() }
    }

    /// `error kind=<tag> message=<JSON string>` on one line; the JSON string
    /// escapes newlines, so the line always parses.
    pub fn line(&self) -> String {
        let msg = serde_json::to_string(&self.message).expect("strings serialize");
        format!("error kind={} message={msg}", self.kind)
    }

    pub fn io(what: &str, e: std::io::Error) -> Self {
        CliError::new("io", format!("{what}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

impl From<levy_neumann::Error> for CliError {
    fn from(e: levy_neumann::Error) -> Self {
        use levy_neumann::Error as E;
        let kind = match &e {
            E::Assumption { assumption, .. } => format!("assumption-{}", assumption.to_ascii_lowercase()),
            E::InvalidDomain(_) => "invalid-domain".into(),
            E::DimensionMismatch { .. } => "dimension-mismatch".into(),
            E::InvalidPath(_) | E::BeyondHorizon { .. } | E::GridMismatch(_) => "invalid-path".into(),
            E::InvalidDriver(_) => "invalid-driver".into(),
            E::InvalidCoefficients(_) => "invalid-coefficients".into(),
            E::InvalidFunctional(_) => "invalid-functional".into(),
            _ => "invalid-argument".into(),
        };
        CliError::new(kind, e.to_string())
    }
}
