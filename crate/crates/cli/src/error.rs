use std::io;
use std::path::PathBuf;

/// Failure of a command, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
    #[error("no word vectors for: {0}")]
    Oov(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("image id mismatch: {0}")]
    IdMismatch(String),
    #[error("training diverged at step {0}")]
    Divergence(usize),
    #[error("self-test failed: {}", .0.join(", "))]
    SelfTest(Vec<String>),
    #[error(transparent)]
    Core(hgsg_core::Error),
}

impl CliError {
    /// 1 self-test failure, 2 missing or malformed input, 3 missing word
    /// vectors, 4 bad parameter, 5 image id mismatch, 6 divergence.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::SelfTest(_) => 1,
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Invalid { .. } => 2,
            CliError::Oov(_) => 3,
            CliError::Parameter(_) => 4,
            CliError::IdMismatch(_) => 5,
            CliError::Divergence(_) => 6,
            CliError::Core(hgsg_core::Error::Validation(_)) => 2,
            CliError::Core(_) => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<hgsg_core::Error> for CliError {
    fn from(e: hgsg_core::Error) -> Self {
        use hgsg_core::Error as E;
        match e {
            E::Embedding { label } => CliError::Oov(label),
            E::Parameter(m) | E::Config(m) => CliError::Parameter(m),
            E::Data(m) => CliError::IdMismatch(m),
            E::Divergence { step } => CliError::Divergence(step),
            other => CliError::Core(other),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
