use std::path::PathBuf;

use jumpeuler_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Failure while estimating one row of an experiment.
    #[error("row M={m}, n={n}: {source}")]
    Row {
        m: usize,
        n: usize,
        #[source]
        source: CoreError,
    },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// Process exit code: 2 for configuration problems, 3 for failures while
    /// simulating or writing results.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Read { .. } => 2,
            CliError::Write { .. } => 3,
            CliError::Row { source, .. } | CliError::Core(source) => core_exit_code(source),
        }
    }
}

fn core_exit_code(err: &CoreError) -> i32 {
    match err {
        CoreError::TrajectoryFailure { .. } | CoreError::NonFiniteState { .. } => 3,
        _ => 2,
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
