use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] l1trend::Error),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, CliError>;

/// 2 usage, 3 data, 4 numerical failure, 1 anything else.
pub fn exit_code(err: &CliError) -> u8 {
    match err {
        CliError::Core(e) => core_code(e),
        CliError::Usage(_) => 2,
        CliError::Parse { .. } | CliError::Data { .. } | CliError::Read { .. } => 3,
        CliError::Write { .. } => 1,
    }
}

fn core_code(err: &l1trend::Error) -> u8 {
    use l1trend::Error as E;
    match err {
        E::Usage(_) => 2,
        E::Data(_) | E::NoUsableColumns => 3,
        E::Numerical { .. } | E::Selection(_) | E::OracleNonConvergence(_) => 4,
        E::Grid { source, .. } => core_code(source),
    }
}
