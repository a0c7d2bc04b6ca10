use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes. These are part of the command-line interface.
pub mod exit {
    pub const OK: u8 = 0;
    /// `ar-check` ran but found a gap above tolerance.
    pub const CHECK_FAILED: u8 = 1;
    pub const MISSING_INPUT: u8 = 2;
    pub const CORRUPT: u8 = 3;
    pub const MODEL_MISMATCH: u8 = 4;
    pub const INVALID_ARGUMENTS: u8 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("image {}: {message}", path.display())]
    Image { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] nlc_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use nlc_core::Error as E;
        match self {
            CliError::Read { .. } | CliError::Write { .. } => exit::MISSING_INPUT,
            CliError::Usage(_) => exit::INVALID_ARGUMENTS,
            CliError::Image { .. } => exit::CORRUPT,
            CliError::Core(e) => match e {
                E::CorruptStream(_) => exit::CORRUPT,
                E::WrongModel { .. } => exit::MODEL_MISMATCH,
                E::Io(_) => exit::MISSING_INPUT,
                E::InvalidArgument(_) | E::Lookup(_) | E::ResourceBound(_) => exit::INVALID_ARGUMENTS,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
