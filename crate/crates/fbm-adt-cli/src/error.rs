//! CLI error reporting: every failure is printed to stderr as one JSON
//! object (`{"error": {"kind": …, "message": …}}`) and the process exits
//! nonzero, so batch drivers can parse failures mechanically.

use fbm_adt::AdtError;

#[derive(Debug)]
pub enum CliError {
    /// An error from the modeling library.
    Module(AdtError),
    /// The run configuration could not be read or violates its schema.
    Config(String),
    /// An artifact could not be serialized or read back.
    Artifact(String),
}

impl CliError {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Module(e) => e.kind(),
            CliError::Config(_) => "config",
            CliError::Artifact(_) => "artifact",
        }
    }

    /// The single-line JSON report written to stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind(), "message": self.to_string() }
        })
        .to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Module(e) => write!(f, "{e}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Artifact(m) => write!(f, "artifact error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<AdtError> for CliError {
    fn from(e: AdtError) -> Self {
        CliError::Module(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Module(AdtError::Io(e))
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<toml::ser::Error> for CliError {
    fn from(e: toml::ser::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Artifact(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
