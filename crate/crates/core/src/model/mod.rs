//! Gated convolutional-recurrent network for frame-level and clip-level
//! event predictions, trained with a small tape-based reverse-mode engine.

mod adam;
mod checkpoint;
mod net;
pub mod tape;

pub use adam::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use net::{Forward, ModelState, Prediction};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("non-finite gradient at parameter {index}")]
    NonFinite { index: usize },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Convolution produces two channel halves `a`, `b`; output `a * sigmoid(b)`.
    Glu,
    /// Context gating: `x * sigmoid(W x + b)` with a per-position channel mix.
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingHead {
    /// Per-class softmax over time from a parallel dense layer weights the frame predictions.
    Attention,
    /// Arithmetic mean of frame predictions.
    Mean,
}

macro_rules! named_enum {
    ($t:ty, $($v:ident => $s:literal),+) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),+ })
            }
        }

        impl FromStr for $t {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok(Self::$v),)+
                    _ => Err(ModelError::InvalidConfig(format!("unknown {} `{s}`", stringify!($t)))),
                }
            }
        }
    };
}

named_enum!(Activation, Glu => "glu", Cg => "cg");
named_enum!(PoolingHead, Attention => "attention", Mean => "mean");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_mels: usize,
    pub n_classes: usize,
    /// Output channels of each convolution block.
    pub channels: Vec<usize>,
    /// `(time, frequency)` average-pooling factors of each block.
    pub pools: Vec<(usize, usize)>,
    pub activation: Activation,
    /// Hidden size of each direction of the bidirectional recurrent layer.
    pub recurrent_hidden: usize,
    pub pooling_head: PoolingHead,
    /// Features are standardized as `(x - input_mean) / input_std` before the first block.
    pub input_mean: f64,
    pub input_std: f64,
}

impl ModelConfig {
    /// Two blocks with 2x2 pooling each.
    pub fn desk(n_mels: usize, n_classes: usize) -> Self {
        Self {
            n_mels,
            n_classes,
            channels: vec![8, 16],
            pools: vec![(2, 2), (2, 2)],
            activation: Activation::Glu,
            recurrent_hidden: 32,
            pooling_head: PoolingHead::Attention,
            input_mean: 0.0,
            input_std: 1.0,
        }
    }

    pub fn conv_blocks(&self) -> usize {
        self.channels.len()
    }

    /// Total time reduction from input frames to output frames.
    pub fn pool_factor(&self) -> usize {
        self.pools.iter().map(|p| p.0).product()
    }

    /// Mel bins left after frequency pooling.
    pub fn pooled_mels(&self) -> usize {
        self.n_mels / self.pools.iter().map(|p| p.1).product::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.channels.is_empty() || self.channels.len() != self.pools.len() {
            return bad(format!("{} channel entries for {} pooling entries", self.channels.len(), self.pools.len()));
        }
        if self.channels.contains(&0) || self.recurrent_hidden == 0 || self.n_classes == 0 {
            return bad("zero-sized layer".into());
        }
        if self.pools.iter().any(|p| p.0 == 0 || p.1 == 0) {
            return bad("zero pooling factor".into());
        }
        let fp: usize = self.pools.iter().map(|p| p.1).product();
        if self.n_mels == 0 || !self.n_mels.is_multiple_of(fp) {
            return bad(format!("frequency pooling {fp} does not divide {} mel bins", self.n_mels));
        }
        if !(self.input_std.is_finite() && self.input_std > 0.0 && self.input_mean.is_finite()) {
            return bad("input normalization must be finite with positive scale".into());
        }
        Ok(())
    }
}
