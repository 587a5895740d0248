use thiserror::Error;

/// Harness-level failures. Every variant maps to a stable category string
/// and exit code so callers can parse the one-line CLI error output.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] dtl_core::Error),

    #[error("checkpoint version {found} unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("corrupt checkpoint payload: {0}")]
    CorruptCheckpoint(String),

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("report parse error: {0}")]
    Report(String),
}

impl HarnessError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::Core(_) => "data",
            HarnessError::CheckpointVersion { .. } | HarnessError::CorruptCheckpoint(_) => {
                "checkpoint"
            }
            HarnessError::ArchitectureMismatch(_) => "architecture",
            HarnessError::Report(_) => "report",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            "data" => 4,
            "checkpoint" => 5,
            "architecture" => 6,
            _ => 7,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
