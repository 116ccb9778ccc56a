use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Divergence(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    /// Marks failures while reading or writing files as I/O errors.
    pub fn io(context: &str, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Divergence(m) => write!(f, "{m}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<xmodal::Error> for CliError {
    fn from(e: xmodal::Error) -> Self {
        use xmodal::Error as E;
        match e {
            E::Divergence { .. } => CliError::Divergence(e.to_string()),
            E::Io(_) => CliError::Io(e.to_string()),
            E::InvalidArgument(_) | E::Parse { .. } | E::MissingCovariate(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Other(e.to_string()),
        }
    }
}
