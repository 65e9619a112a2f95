use rand::Rng;
use serde::{Deserialize, Serialize};

use super::masking::{mask_regions, MaskRegion};
use super::{scale_to_magnitude, AugmentError, Magnitude, Result, ScaleMode, ScaleScheme, TransformId};
use crate::rng::keyed;

/// Random outcomes recorded when a step is sampled, so applying it is pure.
/// Positions and partner choices are kept as unit-interval draws and resolved
/// against the clip and batch they are applied to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Draws {
    Speed { reciprocal: bool },
    TimeShift { fraction: f64 },
    TimeStretch { reciprocal: bool },
    PitchShift { negative: bool },
    Drc { mode: usize },
    TimeMask { starts: Vec<f64> },
    FreqMask { starts: Vec<f64> },
    Mixup { partner: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStep {
    pub id: TransformId,
    pub scale: u8,
    pub draws: Draws,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub seed: u64,
    pub steps: Vec<PolicyStep>,
}

/// Shape information needed to turn recorded draws into concrete parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolveContext {
    /// Feature frames of the clip (after padding).
    pub n_frames: usize,
    pub n_mels: usize,
    /// Position of the clip in its batch and the batch size (mixup partners).
    pub index: usize,
    pub batch_len: usize,
}

/// A transform with concrete parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transform", rename_all = "snake_case")]
pub enum Applied {
    /// Playback factor; output duration is `len / factor`.
    Speed { factor: f64 },
    TimeShift { fraction: f64 },
    TimeStretch { factor: f64 },
    PitchShift { semitones: f64 },
    Drc { mode: usize },
    TimeMask { regions: Vec<MaskRegion> },
    FreqMask { regions: Vec<MaskRegion> },
    Mixup { partner: usize },
}

impl Applied {
    pub fn id(&self) -> TransformId {
        match self {
            Applied::Speed { .. } => TransformId::Speed,
            Applied::TimeShift { .. } => TransformId::TimeShift,
            Applied::TimeStretch { .. } => TransformId::TimeStretch,
            Applied::PitchShift { .. } => TransformId::PitchShift,
            Applied::Drc { .. } => TransformId::Drc,
            Applied::TimeMask { .. } => TransformId::TimeMask,
            Applied::FreqMask { .. } => TransformId::FreqMask,
            Applied::Mixup { .. } => TransformId::Mixup,
        }
    }
}

fn factor(id: TransformId, scale: u8) -> f64 {
    match scale_to_magnitude(id, scale) {
        Ok(Magnitude::Factor(f)) => f,
        Ok(Magnitude::Semitones(s)) => s,
        _ => unreachable!("{id} has a numeric ladder"),
    }
}

impl PolicyStep {
    pub fn resolve(&self, ctx: &ResolveContext) -> Applied {
        match &self.draws {
            Draws::Speed { reciprocal } => {
                let f = factor(TransformId::Speed, self.scale);
                Applied::Speed { factor: if *reciprocal { 1.0 / f } else { f } }
            }
            Draws::TimeStretch { reciprocal } => {
                let f = factor(TransformId::TimeStretch, self.scale);
                Applied::TimeStretch { factor: if *reciprocal { 1.0 / f } else { f } }
            }
            Draws::PitchShift { negative } => {
                let s = factor(TransformId::PitchShift, self.scale);
                Applied::PitchShift { semitones: if *negative { -s } else { s } }
            }
            Draws::TimeShift { fraction } => Applied::TimeShift { fraction: *fraction },
            Draws::Drc { mode } => Applied::Drc { mode: *mode },
            Draws::TimeMask { starts } => Applied::TimeMask { regions: mask_regions(ctx.n_frames, starts) },
            Draws::FreqMask { starts } => Applied::FreqMask { regions: mask_regions(ctx.n_mels, starts) },
            Draws::Mixup { partner } => {
                let others = ctx.batch_len.saturating_sub(1);
                let partner = if others == 0 {
                    ctx.index
                } else {
                    let k = ((partner * others as f64).floor() as usize).min(others - 1);
                    if k >= ctx.index { k + 1 } else { k }
                };
                Applied::Mixup { partner }
            }
        }
    }
}

impl AugmentPolicy {
    pub fn resolve(&self, ctx: &ResolveContext) -> Vec<Applied> {
        self.steps.iter().map(|s| s.resolve(ctx)).collect()
    }
}

/// Draws `p` steps, each uniform over `enabled`, with every random outcome recorded.
pub fn sample_policy(seed: u64, p: usize, scheme: ScaleScheme, enabled: &[TransformId]) -> Result<AugmentPolicy> {
    if enabled.is_empty() {
        return Err(AugmentError::EmptyTransformSet);
    }
    if !(1..=10).contains(&scheme.global_scale) {
        return Err(AugmentError::ScaleOutOfRange(scheme.global_scale));
    }
    let mut rng = keyed(&[seed]);
    let steps = (0..p)
        .map(|_| {
            let id = enabled[rng.gen_range(0..enabled.len())];
            let scale = match scheme.mode {
                ScaleMode::Fixed => scheme.global_scale,
                ScaleMode::RandomUpperBound => rng.gen_range(1..=scheme.global_scale),
            };
            let draws = match id {
                TransformId::Speed => Draws::Speed { reciprocal: rng.gen_bool(0.5) },
                TransformId::TimeStretch => Draws::TimeStretch { reciprocal: rng.gen_bool(0.5) },
                TransformId::PitchShift => Draws::PitchShift { negative: rng.gen_bool(0.5) },
                TransformId::TimeShift => Draws::TimeShift { fraction: rng.gen_range(0.1..=0.9) },
                TransformId::Drc => Draws::Drc { mode: rng.gen_range(0..super::DRC_MODES.len()) },
                TransformId::TimeMask => Draws::TimeMask { starts: (0..scale).map(|_| rng.gen()).collect() },
                TransformId::FreqMask => Draws::FreqMask { starts: (0..scale).map(|_| rng.gen()).collect() },
                TransformId::Mixup => Draws::Mixup { partner: rng.gen() },
            };
            PolicyStep { id, scale, draws }
        })
        .collect();
    Ok(AugmentPolicy { seed, steps })
}
