//! Label types, the synthetic corpus, supervision splits and batch composition.

mod batch;
mod labels;
mod store;
mod synth;

pub use batch::{Batch, BatchSampler, Composition};
pub use labels::{ClipKind, LabeledClip, StrongLabel, WeakLabel};
pub use store::{load_dataset, save_dataset, Dataset, DatasetMeta, SplitName};
pub use synth::{class_table, synth_clip, synth_dataset, ClassPrimitive, CorpusSizes, SynthConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("expected a strongly-labelled clip, got {0:?}")]
    WrongKind(ClipKind),
    #[error("pool `{pool}` has {available} clips but the batch needs {needed}")]
    PoolTooSmall { pool: &'static str, available: usize, needed: usize },
    #[error("missing file {0}")]
    Missing(std::path::PathBuf),
    #[error("{file}:{line}: malformed record: {reason}")]
    Malformed { file: std::path::PathBuf, line: usize, reason: String },
    #[error("checksum mismatch for {0}")]
    Checksum(std::path::PathBuf),
    #[error("at most 10 classes are supported, got {0}")]
    TooManyClasses(usize),
    #[error(transparent)]
    Signal(#[from] crate::signal::SignalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;
