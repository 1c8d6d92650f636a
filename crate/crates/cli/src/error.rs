use legmhe::pipeline::PipelineError;

/// Failure of a command. Printed as one `error kind=... message=...` line.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    ConfigParse { path: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    LogParse { line: usize, message: String },
    #[error("tick {tick}: {message}")]
    SolverFailure { tick: usize, message: String },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("log has {ticks} ticks; the full-information comparison takes at most {max}")]
    LogTooLong { ticks: usize, max: usize },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::ConfigParse { .. } => "ConfigParse",
            CliError::Io { .. } => "IoFailure",
            CliError::LogParse { .. } => "LogParse",
            CliError::SolverFailure { .. } => "SolverFailure",
            CliError::InvalidArgument(_) => "InvalidArgument",
            CliError::LogTooLong { .. } => "LogTooLong",
        }
    }

    /// Single line with the kind and a quoted message.
    pub fn error_line(&self) -> String {
        let mut line = format!("error kind={}", self.kind());
        match self {
            CliError::LogParse { line: l, .. } => line += &format!(" line={l}"),
            CliError::SolverFailure { tick, .. } => line += &format!(" tick={tick}"),
            _ => {}
        }
        line + &format!(" message={:?}", self.to_string())
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), message: err.to_string() }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let tick = match &e {
            PipelineError::Ekf { tick, .. } | PipelineError::Mhe { tick, .. } => *tick,
            PipelineError::FootCount { .. } => 0,
        };
        let message = match &e {
            PipelineError::Ekf { source, .. } => source.to_string(),
            PipelineError::Mhe { source, .. } => source.to_string(),
            other => other.to_string(),
        };
        CliError::SolverFailure { tick, message }
    }
}
