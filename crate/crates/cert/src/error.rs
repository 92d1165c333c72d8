use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad config, flags or output location. Exit code 2.
    Config(String),
    /// The computation itself failed. Exit code 3.
    Numerical(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    /// One-line JSON diagnostic for stderr.
    pub fn diagnostic(&self) -> String {
        serde_json::json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numerical(m) => f.write_str(m),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<timebin_core::Error> for CliError {
    fn from(e: timebin_core::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}
