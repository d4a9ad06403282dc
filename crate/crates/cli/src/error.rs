//! CLI failures and their exit codes.

use hearsay_core::audio::AudioError;
use hearsay_core::cnn::CnnError;
use hearsay_core::crawler::CrawlError;
use hearsay_core::dataset::DatasetError;
use hearsay_core::evaluator::EvalError;
use hearsay_core::feedback::FeedbackError;
use hearsay_core::features::FeatureError;
use hearsay_core::fixture::FixtureError;
use hearsay_core::pipeline::PipelineError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    BadConfig(String),
    #[error("{0}")]
    MissingInput(String),
    #[error("{0}")]
    InvalidData(String),
    /// A remote source (fetcher, port) could not be reached or bound.
    #[error("{0}")]
    Unavailable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'static str,
    exit_code: u8,
    message: &'a str,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::BadConfig(_) => "bad_config",
            CliError::MissingInput(_) => "missing_input",
            CliError::InvalidData(_) => "invalid_data",
            CliError::Unavailable(_) => "unavailable",
            CliError::Io(_) => "io",
        }
    }

    /// 2 is left to clap's usage errors.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::BadConfig(_) => 3,
            CliError::MissingInput(_) => 4,
            CliError::InvalidData(_) => 5,
            CliError::Io(_) => 6,
            CliError::Unavailable(_) => 7,
        }
    }

    /// One JSON object, for stderr.
    pub fn json_line(&self) -> String {
        let message = self.to_string();
        serde_json::to_string(&ErrorLine {
            error: self.kind(),
            exit_code: self.exit_code(),
            message: &message,
        })
        .expect("error line serialises")
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::InvalidData(e.to_string())
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::MissingFile(p) => CliError::MissingInput(format!("file not found: {p}")),
            DatasetError::Io(e) => CliError::Io(e),
            e => invalid(e),
        }
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        match e {
            AudioError::Io(e) => CliError::Io(e),
            e => invalid(e),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::InvalidConfig(m) => CliError::BadConfig(m),
            FeatureError::Io(e) => CliError::Io(e),
            e => invalid(e),
        }
    }
}

impl From<CnnError> for CliError {
    fn from(e: CnnError) -> Self {
        match e {
            CnnError::InvalidConfig(m) => CliError::BadConfig(m),
            CnnError::Io(e) => CliError::Io(e),
            e => invalid(e),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Audio(e) => e.into(),
            PipelineError::Feature(e) => e.into(),
            PipelineError::Cnn(e) => e.into(),
            e => invalid(e),
        }
    }
}

impl From<CrawlError> for CliError {
    fn from(e: CrawlError) -> Self {
        match e {
            CrawlError::FetcherUnavailable(m) => CliError::Unavailable(m),
            CrawlError::Io(e) => CliError::Io(e),
            e => invalid(e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(e) => CliError::Io(e),
            e => invalid(e),
        }
    }
}

impl From<FeedbackError> for CliError {
    fn from(e: FeedbackError) -> Self {
        match e {
            FeedbackError::NotEnoughEvaluators { .. } | FeedbackError::InvalidConfig(_) => {
                CliError::BadConfig(e.to_string())
            }
            FeedbackError::Io(e) => CliError::Io(e),
            e => invalid(e),
        }
    }
}

impl From<FixtureError> for CliError {
    fn from(e: FixtureError) -> Self {
        match e {
            FixtureError::Io(e) => CliError::Io(e),
            e => invalid(e),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        invalid(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        invalid(e)
    }
}
