use std::path::PathBuf;

use serde::Serialize;

/// Exit codes, also listed in `qrc --help`.
pub mod exit {
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const DOMAIN: i32 = 4;
    pub const FIT: i32 = 5;
    pub const MISMATCH: i32 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] qrc_core::Error),
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0} quantities differ from the published values")]
    Mismatch(usize),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Self::Schema {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        use qrc_core::Error as E;
        match self {
            Self::Core(e) => match e {
                E::Domain(_) => "domain",
                E::Unphysical { .. } => "unphysical",
                E::InsufficientData(_) => "insufficient_data",
                E::Degenerate(_) => "degenerate",
                E::NonConvergence { .. } => "non_convergence",
                E::RankDeficient(_) => "rank_deficient",
                E::InsufficientPhaseRange { .. } => "insufficient_phase_range",
                E::Parse { .. } => "parse",
                E::Io(_) => "io",
            },
            Self::Schema { .. } => "schema",
            Self::Usage(_) => "usage",
            Self::Io { .. } => "io",
            Self::Mismatch(_) => "mismatch",
        }
    }

    pub fn exit_code(&self) -> i32 {
        use qrc_core::Error as E;
        match self {
            Self::Core(E::Parse { .. }) | Self::Schema { .. } | Self::Usage(_) => exit::USAGE,
            Self::Core(E::Io(_)) | Self::Io { .. } => exit::IO,
            Self::Core(
                E::NonConvergence { .. }
                | E::RankDeficient(_)
                | E::InsufficientPhaseRange { .. }
                | E::Degenerate(_),
            ) => exit::FIT,
            Self::Core(_) => exit::DOMAIN,
            Self::Mismatch(_) => exit::MISMATCH,
        }
    }
}

#[derive(Serialize)]
pub struct ErrorReport<'a> {
    pub error: ErrorBody<'a>,
}

#[derive(Serialize)]
pub struct ErrorBody<'a> {
    pub kind: &'a str,
    pub message: String,
    pub exit_code: i32,
}

impl<'a> From<&'a CliError> for ErrorReport<'a> {
    fn from(e: &'a CliError) -> Self {
        Self {
            error: ErrorBody {
                kind: e.kind(),
                message: e.to_string(),
                exit_code: e.exit_code(),
            },
        }
    }
}
