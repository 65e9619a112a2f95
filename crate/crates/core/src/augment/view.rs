use super::effects::{drc, pitch_shift, speed, time_shift, time_stretch, DRC_MODES};
use super::masking::{apply_freq_mask, apply_time_mask};
use super::mixup::mixup;
use super::policy::{Applied, AugmentPolicy, ResolveContext};
use super::transport::{step_map, transport, TransportMode, ViewTransport};
use super::Result;
use crate::dataset::{ClipKind, LabeledClip};
use crate::signal::{log_mel, FeatureConfig, MelSpectrogram};

/// Shapes shared by all views built for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewContext {
    pub features: FeatureConfig,
    /// Feature frames are padded to a multiple of this (the model's time pooling).
    pub frame_multiple: usize,
    /// Frames of the label / prediction grid.
    pub label_frames: usize,
    pub mode: TransportMode,
}

impl ViewContext {
    pub fn padded_frames(&self) -> usize {
        self.features.n_frames().div_ceil(self.frame_multiple.max(1)) * self.frame_multiple.max(1)
    }
}

/// Feature matrix of a clip, padded for the model.
pub fn clip_features(clip: &LabeledClip, ctx: &ViewContext) -> Result<MelSpectrogram> {
    let w = clip.waveform.clone().pad_or_crop(ctx.features.clip_samples());
    Ok(log_mel(&w, &ctx.features)?.pad_frames_to_multiple(ctx.frame_multiple))
}

#[derive(Debug, Clone)]
pub struct AugmentedView {
    /// Transformed audio with transported labels; `events` is not tracked.
    pub clip: LabeledClip,
    pub features: MelSpectrogram,
    pub applied: Vec<Applied>,
    pub transport: ViewTransport,
}

/// Applies `policy` to `batch[index]`: waveform transforms in policy order,
/// then feature extraction, then masks. Mixup partners are taken from the
/// unaugmented batch. `original_features` is reused when no waveform
/// transform is present.
pub fn build_view(
    batch: &[&LabeledClip],
    index: usize,
    original_features: Option<&MelSpectrogram>,
    policy: &AugmentPolicy,
    ctx: &ViewContext,
) -> Result<AugmentedView> {
    let n_samples = ctx.features.clip_samples();
    let resolve = ResolveContext {
        n_frames: ctx.padded_frames(),
        n_mels: ctx.features.n_mels,
        index,
        batch_len: batch.len(),
    };
    let applied = policy.resolve(&resolve);

    let mut clip = batch[index].clone();
    clip.events = None;
    clip.waveform = clip.waveform.pad_or_crop(n_samples);
    let mut touched_audio = false;
    for step in &applied {
        if step.id().is_feature_domain() {
            continue;
        }
        touched_audio = true;
        clip.waveform = match step {
            Applied::Speed { factor } => speed(&clip.waveform, *factor)?,
            Applied::TimeShift { fraction } => time_shift(&clip.waveform, *fraction),
            Applied::TimeStretch { factor } => time_stretch(&clip.waveform, *factor)?,
            Applied::PitchShift { semitones } => pitch_shift(&clip.waveform, *semitones)?,
            Applied::Drc { mode } => drc(&clip.waveform, &DRC_MODES[*mode]),
            Applied::Mixup { partner } => {
                let mut other = batch[*partner].clone();
                other.events = None;
                other.waveform = other.waveform.pad_or_crop(n_samples);
                clip = mixup(&clip, &other)?;
                continue;
            }
            Applied::TimeMask { .. } | Applied::FreqMask { .. } => unreachable!(),
        }
        .pad_or_crop(n_samples);
        if let Some(strong) = &mut clip.strong {
            let map = step_map(step, strong.n_frames, ctx.mode);
            strong.grid = map.apply(&strong.grid, strong.n_classes, 0);
        }
        if clip.kind == ClipKind::Strong {
            clip.weak = clip.strong.as_ref().map(|s| s.weak());
        }
    }

    let mut features = match original_features {
        Some(f) if !touched_audio => f.clone(),
        _ => clip_features(&clip, ctx)?,
    };
    for step in &applied {
        match step {
            Applied::TimeMask { regions } => features = apply_time_mask(&features, regions),
            Applied::FreqMask { regions } => features = apply_freq_mask(&features, regions),
            _ => {}
        }
    }
    let transport = transport(&applied, ctx.label_frames, ctx.mode);
    Ok(AugmentedView { clip, features, applied, transport })
}
