use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the toolkit. Each variant maps onto one of the CLI
/// exit-code classes via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parameter error: {0}")]
    Param(String),

    #[error("config error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("step {step} is outside the schedule range [0, {t1}]")]
    StepOutOfRange { step: f64, t1: u64 },

    #[error("checkpoint {index} lies past the end of the schedule (step {step} > {t1})")]
    EndOfSchedule { index: u64, step: u64, t1: u64 },

    #[error("schedule has no non-zero checkpoints")]
    EmptySchedule,

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("column {column} has zero variance; correlation is undefined")]
    ZeroVariance { column: String },

    #[error("design matrix is rank deficient: column `{column}` is linearly dependent on earlier columns")]
    RankDeficient { column: String },

    #[error("stage `{stage}` failed ({artifact}): {source}")]
    Stage {
        stage: String,
        artifact: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Param(_) => 2,
            Error::Io { .. } | Error::Format(_) | Error::Data(_) | Error::EmptyCorpus => 3,
            Error::StepOutOfRange { .. } | Error::EndOfSchedule { .. } | Error::EmptySchedule => 2,
            Error::Numeric(_) | Error::ZeroVariance { .. } | Error::RankDeficient { .. } => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
