use diffpid::Error;
use serde::Serialize;

pub const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag, missing or malformed argument)
  3  configuration or input file unreadable or malformed
  4  invalid input (domain, shape, unknown phrase, missing or zero prior)
  5  estimation failed (non-finite integrand or trajectory, diverged training)
  6  bridge failure (transport, shape mismatch, request rejected)
On failure a JSON record {\"error\", \"message\", \"exit_code\"} is written to stderr.";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(Error::Json(e))
    }
}

#[derive(Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Core(e) => match e {
                Error::Io(_) | Error::Json(_) | Error::Format { .. } => "config",
                Error::Domain(_)
                | Error::ShapeMismatch { .. }
                | Error::InvalidArgument(_)
                | Error::UnsupportedCondition { .. }
                | Error::MissingPrior { .. }
                | Error::ZeroProbability(_) => "invalid_input",
                Error::NonFiniteIntegrand { .. } | Error::Diverged { .. } | Error::NonFiniteTrajectory { .. } => {
                    "estimation"
                }
                Error::Transport(_) | Error::BridgeShape { .. } | Error::BridgeRejected { .. } => "bridge",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "usage" => 2,
            "config" => 3,
            "invalid_input" => 4,
            "estimation" => 5,
            _ => 6,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        let message = match self {
            CliError::Usage(m) | CliError::Config(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        };
        ErrorRecord {
            error: self.kind(),
            message,
            exit_code: self.exit_code(),
        }
    }
}
