//! Error classification for exit codes: bad inputs and configuration exit
//! with 2, failures during the work itself exit with 1.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// The command was asked to do something invalid: unknown config keys,
    /// malformed input files, inconsistent parameters. Exit code 2.
    Validation(anyhow::Error),
    /// The work itself failed: I/O, numeric divergence, …. Exit code 1.
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(anyhow::anyhow!(msg.into()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(e) | CliError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<textprep::TextError> for CliError {
    fn from(e: textprep::TextError) -> Self {
        match e {
            textprep::TextError::Io { .. } => CliError::Runtime(e.into()),
            _ => CliError::Validation(e.into()),
        }
    }
}

impl From<seq2seq::ModelError> for CliError {
    fn from(e: seq2seq::ModelError) -> Self {
        match e {
            seq2seq::ModelError::Io { .. } | seq2seq::ModelError::Numeric(_) => {
                CliError::Runtime(e.into())
            }
            _ => CliError::Validation(e.into()),
        }
    }
}

impl From<training::TrainError> for CliError {
    fn from(e: training::TrainError) -> Self {
        match &e {
            training::TrainError::Numeric(_) => CliError::Runtime(e.into()),
            training::TrainError::Model(m) => match m {
                seq2seq::ModelError::Io { .. } | seq2seq::ModelError::Numeric(_) => {
                    CliError::Runtime(e.into())
                }
                _ => CliError::Validation(e.into()),
            },
            _ => CliError::Validation(e.into()),
        }
    }
}

impl From<decoding::DecodeError> for CliError {
    fn from(e: decoding::DecodeError) -> Self {
        match e {
            decoding::DecodeError::Model(_) => CliError::Runtime(e.into()),
            _ => CliError::Validation(e.into()),
        }
    }
}

impl From<evalkit::EvalError> for CliError {
    fn from(e: evalkit::EvalError) -> Self {
        CliError::Validation(e.into())
    }
}

impl From<augment::AugmentError> for CliError {
    fn from(e: augment::AugmentError) -> Self {
        match e {
            augment::AugmentError::SourceFailed { .. } => CliError::Runtime(e.into()),
            _ => CliError::Validation(e.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}
