use super::{Result, SemisupError};
use crate::eval::{decode_events, median_filter, CollarParams, CountAccumulator, EventList, MetricReport};
use crate::model::{ModelState, Prediction};
use crate::signal::MelSpectrogram;
use crate::LabeledClip;

/// Median-filters and decodes frame predictions into events.
pub fn predictions_to_events(p: &Prediction, frame_hop_s: f64, median_s: f64) -> EventList {
    let binary = median_filter(&p.strong, p.n_frames, p.n_classes, median_s, frame_hop_s);
    decode_events(&binary, p.n_frames, p.n_classes, frame_hop_s)
}

/// Collar F1 of `state` on clips with ground-truth events.
pub fn evaluate(
    state: &ModelState,
    features: &[MelSpectrogram],
    clips: &[LabeledClip],
    frame_hop_s: f64,
    median_s: f64,
) -> Result<MetricReport> {
    if features.len() != clips.len() {
        return Err(SemisupError::Shape { what: "evaluation features", expected: clips.len(), got: features.len() });
    }
    let mut acc = CountAccumulator::new(state.config.n_classes, CollarParams::default());
    for (m, clip) in features.iter().zip(clips) {
        let reference = clip
            .events
            .as_ref()
            .ok_or_else(|| SemisupError::Config(format!("clip {} has no reference events", clip.id)))?;
        let p = state.predict(m)?;
        acc.add(reference, &predictions_to_events(&p, frame_hop_s, median_s));
    }
    Ok(acc.report())
}
