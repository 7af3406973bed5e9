use thiserror::Error;

/// Failures grouped by the exit code they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("sampler aborted: {0}")]
    Sampler(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Sampler(_) => 4,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::Data(format!("{}: {e}", path.display()))
    }
}

impl From<sggmdar::Error> for CliError {
    fn from(e: sggmdar::Error) -> Self {
        use sggmdar::Error as E;
        match e {
            E::SamplerAbort { .. } => Self::Sampler(e.to_string()),
            E::InvalidParameter { .. } | E::MalformedSticks(_) => Self::Config(e.to_string()),
            other => Self::Data(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
