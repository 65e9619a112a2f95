//! Audio transforms, magnitude ladders, random policy sampling and label/prediction transport.
//!
//! Waveform-domain transforms (speed, time shift, time stretch, pitch shift,
//! DRC, mixup) run first; features are then extracted and the feature-domain
//! masks (time, frequency) applied last.

mod effects;
mod masking;
mod mixup;
mod policy;
mod transport;
mod view;

pub use effects::{drc, pitch_shift, speed, time_shift, time_stretch, DrcMode, DRC_MODES};
pub use masking::{apply_freq_mask, apply_time_mask, freq_mask, mask_regions, mask_unit, time_mask, MaskRegion};
pub use mixup::mixup;
pub use policy::{sample_policy, Applied, AugmentPolicy, Draws, PolicyStep, ResolveContext};
pub use transport::{or_binarized, step_map, transport, FrameMap, TransportMode, ViewTransport};
pub use view::{build_view, clip_features, AugmentedView, ViewContext};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("scale {0} outside 1..=10")]
    ScaleOutOfRange(u8),
    #[error("no transforms enabled")]
    EmptyTransformSet,
    #[error("unknown transform `{0}`")]
    UnknownTransform(String),
    #[error("clip length mismatch: {0} vs {1} samples")]
    LengthMismatch(usize, usize),
    #[error("prediction grid of {got} values does not match {frames}x{classes}")]
    GridMismatch { got: usize, frames: usize, classes: usize },
    #[error(transparent)]
    Signal(#[from] crate::signal::SignalError),
}

pub type Result<T> = std::result::Result<T, AugmentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformId {
    Speed,
    TimeShift,
    TimeStretch,
    PitchShift,
    Drc,
    TimeMask,
    FreqMask,
    Mixup,
}

impl TransformId {
    pub const ALL: [TransformId; 8] = [
        Self::Speed,
        Self::TimeShift,
        Self::TimeStretch,
        Self::PitchShift,
        Self::Drc,
        Self::TimeMask,
        Self::FreqMask,
        Self::Mixup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Speed => "speed",
            Self::TimeShift => "time_shift",
            Self::TimeStretch => "time_stretch",
            Self::PitchShift => "pitch_shift",
            Self::Drc => "drc",
            Self::TimeMask => "time_mask",
            Self::FreqMask => "freq_mask",
            Self::Mixup => "mixup",
        }
    }

    pub fn is_feature_domain(self) -> bool {
        matches!(self, Self::TimeMask | Self::FreqMask)
    }
}

impl fmt::Display for TransformId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformId {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| AugmentError::UnknownTransform(s.to_string()))
    }
}

/// Transform-specific strength for one integer scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Magnitude {
    /// Resampling or stretching factor.
    Factor(f64),
    Semitones(f64),
    /// Number of masking units.
    Units(usize),
    /// Transform has a single fixed strength.
    Fixed,
}

/// Maps an integer distortion scale in `1..=10` onto the transform's ladder.
pub fn scale_to_magnitude(id: TransformId, scale: u8) -> Result<Magnitude> {
    if !(1..=10).contains(&scale) {
        return Err(AugmentError::ScaleOutOfRange(scale));
    }
    Ok(match id {
        TransformId::Speed | TransformId::TimeStretch => Magnitude::Factor((100.0 + 5.0 * scale as f64) / 100.0),
        TransformId::PitchShift => Magnitude::Semitones(0.5 * scale as f64),
        TransformId::TimeMask | TransformId::FreqMask => Magnitude::Units(scale as usize),
        TransformId::TimeShift | TransformId::Drc | TransformId::Mixup => Magnitude::Fixed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    /// Every policy uses the global scale.
    Fixed,
    /// Each policy step draws a scale uniformly from `1..=global_scale`.
    RandomUpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleScheme {
    pub mode: ScaleMode,
    pub global_scale: u8,
}

impl ScaleScheme {
    pub fn fixed(global_scale: u8) -> Self {
        Self { mode: ScaleMode::Fixed, global_scale }
    }

    pub fn random(global_scale: u8) -> Self {
        Self { mode: ScaleMode::RandomUpperBound, global_scale }
    }
}
