use super::{AugmentError, Result};
use crate::dataset::{ClipKind, LabeledClip};
use crate::eval::EventList;
use crate::signal::Waveform;

/// Sums two clips without rescaling and ORs their labels.
///
/// The result carries the weaker of the two supervision kinds.
pub fn mixup(a: &LabeledClip, b: &LabeledClip) -> Result<LabeledClip> {
    if a.waveform.len() != b.waveform.len() {
        return Err(AugmentError::LengthMismatch(a.waveform.len(), b.waveform.len()));
    }
    let samples = a.waveform.samples.iter().zip(&b.waveform.samples).map(|(x, y)| x + y).collect();
    let kind = a.kind.weaker(b.kind);
    let strong = match (kind, &a.strong, &b.strong) {
        (ClipKind::Strong, Some(x), Some(y)) => Some(x.or(y)),
        _ => None,
    };
    let weak = match (kind, &a.weak, &b.weak) {
        (ClipKind::Strong | ClipKind::Weak, Some(x), Some(y)) => Some(x.or(y)),
        _ => None,
    };
    let events = match (&a.events, &b.events) {
        (Some(x), Some(y)) => {
            let mut merged = EventList { classes: x.classes.iter().zip(&y.classes).map(|(p, q)| p.iter().chain(q).copied().collect()).collect() };
            merged.sort();
            Some(merged)
        }
        _ => None,
    };
    Ok(LabeledClip {
        id: format!("{}+{}", a.id, b.id),
        waveform: Waveform { samples, sample_rate: a.waveform.sample_rate },
        kind,
        strong,
        weak,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::WeakLabel;

    fn weak_clip(v: Vec<u8>, amp: f32) -> LabeledClip {
        LabeledClip {
            id: "w".into(),
            waveform: Waveform::new(vec![amp; 10], 16000).unwrap(),
            kind: ClipKind::Weak,
            strong: None,
            weak: Some(WeakLabel(v)),
            events: None,
        }
    }

    #[test]
    fn labels_or_and_no_rescaling() {
        let m = mixup(&weak_clip(vec![1, 0, 1], 0.8), &weak_clip(vec![0, 0, 1], 0.7)).unwrap();
        assert_eq!(m.weak.unwrap().0, vec![1, 0, 1]);
        assert!(m.waveform.peak() > 1.0);
        assert!((m.waveform.samples[0] - 1.5).abs() < 1e-6);
    }

    #[test]
    fn silence_is_identity() {
        let mut ev = EventList::new(2);
        ev.push(1, 0.0, 0.0005);
        let x = LabeledClip::strong("x".into(), Waveform::new((0..10).map(|i| i as f32).collect(), 16000).unwrap(), ev, 4, 0.001);
        let silent = LabeledClip::strong("s".into(), Waveform::silence(10, 16000), EventList::new(2), 4, 0.001);
        let m = mixup(&x, &silent).unwrap();
        assert_eq!(m.waveform, x.waveform);
        assert_eq!(m.strong, x.strong);
        assert_eq!(m.weak, x.weak);
        assert_eq!(m.kind, ClipKind::Strong);
    }

    #[test]
    fn kinds_and_errors() {
        let u = LabeledClip::unlabeled("u".into(), Waveform::silence(10, 16000));
        let m = mixup(&weak_clip(vec![1, 1, 0], 0.1), &u).unwrap();
        assert_eq!(m.kind, ClipKind::Unlabeled);
        assert!(m.weak.is_none());
        let short = LabeledClip::unlabeled("s".into(), Waveform::silence(5, 16000));
        assert!(matches!(mixup(&u, &short), Err(AugmentError::LengthMismatch(10, 5))));
    }
}
