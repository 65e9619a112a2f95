//! Semi-supervised sound event detection toolkit.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: STFT, mel filterbank, log-mel features, resampling and audio file I/O.
//! - [`augment`]: the eight audio transforms, magnitude ladders, random policy
//!   sampling and the label/prediction transport used by consistency training.
//! - [`dataset`]: label types, a synthetic strongly-labelled corpus, supervision
//!   splits and batch composition.
//! - [`model`]: a small gated CRNN on top of a tape-based reverse-mode engine.
//! - [`semisup`]: supervised, mean-teacher and consistency losses, EMA teacher,
//!   schedules and the training loop.
//! - [`eval`]: median filtering, event decoding and event-based collar F1.

pub mod augment;
pub mod dataset;
pub mod eval;
pub mod model;
pub mod rng;
pub mod semisup;
pub mod signal;

pub use dataset::{Batch, ClipKind, LabeledClip, StrongLabel, WeakLabel};
pub use eval::{EventList, MetricReport};
pub use model::{ModelConfig, ModelState, Prediction};
pub use signal::{MelSpectrogram, Waveform};
