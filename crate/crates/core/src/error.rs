use std::path::PathBuf;

/// Error type shared by every module in the crate.
///
/// The two broad categories matter to callers: [`Error::exit_code`] maps
/// input problems (bad data, bad arguments, unreadable input files) to 1 and
/// runtime failures (write errors, diverged training) to 2, matching the
/// process exit codes of the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The caller handed us something invalid: a malformed matrix, an
    /// out-of-range parameter, a file that does not parse.
    #[error("{0}")]
    Input(String),

    /// Reading an input file failed before we could parse it.
    #[error("cannot read {path}: {source}")]
    ReadInput {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Writing an output artifact failed.
    #[error("cannot write {path}: {source}")]
    WriteOutput {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Training produced a non-finite loss; the run cannot continue.
    #[error("training diverged: {0}")]
    Diverged(String),
}

impl Error {
    /// Build an input error from anything displayable.
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Process exit code for the CLI: 1 for input errors, 2 for runtime
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::ReadInput { .. } => 1,
            Error::WriteOutput { .. } | Error::Diverged(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
