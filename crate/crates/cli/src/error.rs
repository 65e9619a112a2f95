use sedkit_core::dataset::DatasetError;
use sedkit_core::model::ModelError;
use sedkit_core::semisup::SemisupError;
use sedkit_core::signal::SignalError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            ModelError::InvalidConfig(_) | ModelError::DimensionMismatch { .. } => CliError::Config(e.to_string()),
            ModelError::Checkpoint(_) | ModelError::Io(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<SemisupError> for CliError {
    fn from(e: SemisupError) -> Self {
        match e {
            SemisupError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            SemisupError::Config(_) | SemisupError::Shape { .. } => CliError::Config(e.to_string()),
            SemisupError::Model(m) => m.into(),
            SemisupError::Dataset(d) => d.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<sedkit_core::augment::AugmentError> for CliError {
    fn from(e: sedkit_core::augment::AugmentError) -> Self {
        CliError::Config(e.to_string())
    }
}
