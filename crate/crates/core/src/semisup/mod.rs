//! Semi-supervised training: supervised, mean-teacher and consistency losses,
//! schedules, the EMA teacher and the training loop.

mod evaluate;
mod losses;
mod schedule;
mod train;

pub use evaluate::{evaluate, predictions_to_events};
pub use losses::{
    consistency_loss, meanteacher_loss, supervised_loss, total_loss, ConsistencyOutput, LossOutput, PredGrad, Target,
    ViewPrediction, PROB_CLAMP,
};
pub use schedule::{ema_update, rampup, LrSchedule};
pub use train::{train, EpochRecord, PreparedData, RunArtifacts, TrainConfig, TrainOutcome};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SemisupError {
    #[error("{what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite {what} at epoch {epoch}, step {step}")]
    NonFinite { what: String, epoch: usize, step: usize },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Augment(#[from] crate::augment::AugmentError),
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Signal(#[from] crate::signal::SignalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SemisupError>;

/// Training method: which unsupervised terms are active and whether augmented views are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Supervised loss on the originals only.
    #[serde(rename = "supervised")]
    Supervised,
    #[serde(rename = "MT")]
    Mt,
    #[serde(rename = "MT+RDA")]
    MtRda,
    #[serde(rename = "CR+RDA")]
    CrRda,
    #[serde(rename = "MT+CR+RDA")]
    MtCrRda,
}

impl Method {
    pub const TABLE: [Method; 4] = [Method::Mt, Method::MtRda, Method::CrRda, Method::MtCrRda];

    /// `(lambda_unsuper, lambda_cr)`.
    pub fn lambdas(self) -> (f64, f64) {
        match self {
            Method::Supervised => (0.0, 0.0),
            Method::Mt | Method::MtRda => (2.0, 0.0),
            Method::CrRda => (0.0, 2.0),
            Method::MtCrRda => (2.0, 2.0),
        }
    }

    /// Whether random augmentation views are built.
    pub fn uses_views(self) -> bool {
        matches!(self, Method::MtRda | Method::CrRda | Method::MtCrRda)
    }

    pub fn uses_teacher(self) -> bool {
        self.lambdas().0 > 0.0
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Supervised => "supervised",
            Method::Mt => "MT",
            Method::MtRda => "MT+RDA",
            Method::CrRda => "CR+RDA",
            Method::MtCrRda => "MT+CR+RDA",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SemisupError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['_', '-'], "+");
        [Method::Supervised, Method::Mt, Method::MtRda, Method::CrRda, Method::MtCrRda]
            .into_iter()
            .find(|m| m.name().to_ascii_lowercase() == norm)
            .ok_or_else(|| SemisupError::Config(format!("unknown method `{s}`")))
    }
}
