use owc_core::allocate::AllocError;
use owc_core::metrics::MetricsError;
use owc_core::raytrace::TraceError;
use owc_core::scene::ScenarioError;

/// Failure classes, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Infeasible(String),
    #[error(transparent)]
    Internal(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 1,
            Self::Infeasible(_) => 2,
            Self::Internal(_) => 3,
        }
    }

    pub(crate) fn internal(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        Self::Internal(anyhow::anyhow!("{context}: {e}"))
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match &e {
            ScenarioError::Io { .. } => Self::Validation(e.to_string()),
            ScenarioError::Invalid(v) => {
                let lines: Vec<String> = v.iter().map(|v| format!("  {}: {}", v.path, v.message)).collect();
                Self::Validation(format!("invalid scenario:\n{}", lines.join("\n")))
            }
            _ => Self::Validation(e.to_string()),
        }
    }
}

impl From<AllocError> for CliError {
    fn from(e: AllocError) -> Self {
        match e {
            AllocError::Infeasible { .. } | AllocError::NoUsers => Self::Infeasible(e.to_string()),
            AllocError::TooLarge { .. } => Self::Validation(e.to_string()),
            other => Self::Internal(anyhow::anyhow!(other)),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Trace(TraceError::InvalidConfig(msg)) => Self::Validation(msg),
            other => Self::Internal(anyhow::anyhow!(other)),
        }
    }
}
