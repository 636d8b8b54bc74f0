use jacdeform::mesh::MeshError;
use jacdeform::Error as CoreError;
use thiserror::Error;

/// Failure of a subcommand, carrying the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Mesh(MeshError),
    #[error("{0}")]
    MeshInput(String),
    #[error(transparent)]
    Core(CoreError),
    #[error("{0}")]
    Mismatch(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self::Usage(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Mesh(_) | Self::MeshInput(_) => 3,
            Self::Core(e) => core_exit_code(e),
            Self::Mismatch(_) | Self::Io { .. } => 1,
        }
    }

    /// Short category printed in front of the message on stderr.
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "usage",
            3 => "mesh",
            4 => "numerical",
            5 => "guidance",
            _ => "io",
        }
    }
}

fn core_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Config(_) | CoreError::Invalid(_) | CoreError::Checkpoint { .. } => 2,
        CoreError::Mesh(_) | CoreError::Disconnected { .. } | CoreError::LengthMismatch { .. } => 3,
        CoreError::NumericalAbort { .. } | CoreError::NonFinite(_) | CoreError::Sparse(_) => 4,
        CoreError::Guidance(_) => 5,
        CoreError::Io { .. } => 1,
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        Self::Core(e)
    }
}

impl From<MeshError> for CliError {
    fn from(e: MeshError) -> Self {
        Self::Mesh(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
