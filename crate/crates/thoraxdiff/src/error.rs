use std::path::PathBuf;

use serde::Serialize;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] thoraxdiff_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}: field `{field}`: {reason}")]
    Format {
        file: PathBuf,
        field: String,
        reason: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error("manifest: {0}")]
    Manifest(String),

    /// A data-level failure attributed to a named input (a feature source,
    /// a dataset entry).
    #[error("{what}: {source}")]
    Input {
        what: String,
        #[source]
        source: thoraxdiff_core::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(file: impl Into<PathBuf>, field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            field: field.into(),
            reason: reason.into(),
        }
    }

    fn core_kind(e: &thoraxdiff_core::Error) -> &'static str {
        use thoraxdiff_core::Error as C;
        match e {
            C::Config { .. } => "config",
            C::NumericHealth { .. } => "numeric-health",
            _ => "data",
        }
    }

    /// `config`, `usage`, `data`, `format`, `numeric-health` or `io`.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(e) => Self::core_kind(e),
            Error::Input { source, .. } => Self::core_kind(source),
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Usage(_) => "usage",
            Error::Manifest(_) => "data",
        }
    }

    /// 2 usage or configuration, 3 data or format, 4 numeric health, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "config" | "usage" => 2,
            "numeric-health" => 4,
            "io" => 5,
            _ => 3,
        }
    }

    /// The machine-readable form printed on stderr by the CLI.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            exit_code: i32,
            message: String,
        }
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: Body<'a>,
        }
        serde_json::to_string(&Wrapper {
            error: Body {
                kind: self.kind(),
                exit_code: self.exit_code(),
                message: self.to_string(),
            },
        })
        .expect("error body serializes")
    }
}
