use serde::{Deserialize, Serialize};

use super::{DatasetError, Result};
use crate::eval::EventList;
use crate::signal::Waveform;

/// Supervision available for a clip, ordered from weakest to strongest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipKind {
    Unlabeled,
    Weak,
    Strong,
}

impl ClipKind {
    pub fn weaker(self, other: Self) -> Self {
        self.min(other)
    }
}

/// Row-major `n_frames x n_classes` binary activity grid at output-frame resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongLabel {
    pub grid: Vec<u8>,
    pub n_frames: usize,
    pub n_classes: usize,
    pub frame_hop_s: f64,
}

impl StrongLabel {
    pub fn zeros(n_frames: usize, n_classes: usize, frame_hop_s: f64) -> Self {
        Self { grid: vec![0; n_frames * n_classes], n_frames, n_classes, frame_hop_s }
    }

    /// Frame `t` is active for an event when its centre `(t + 0.5) * hop` lies in `[onset, offset)`.
    pub fn from_events(events: &EventList, n_frames: usize, frame_hop_s: f64) -> Self {
        let n_classes = events.n_classes();
        let mut label = Self::zeros(n_frames, n_classes, frame_hop_s);
        for (c, e) in events.iter() {
            for t in 0..n_frames {
                let centre = (t as f64 + 0.5) * frame_hop_s;
                if centre >= e.onset && centre < e.offset {
                    label.grid[t * n_classes + c] = 1;
                }
            }
        }
        label
    }

    pub fn get(&self, t: usize, c: usize) -> u8 {
        self.grid[t * self.n_classes + c]
    }

    /// Clip-level label: a class is present if any frame is active.
    pub fn weak(&self) -> WeakLabel {
        WeakLabel(
            (0..self.n_classes)
                .map(|c| (0..self.n_frames).any(|t| self.get(t, c) != 0) as u8)
                .collect(),
        )
    }

    pub fn or(&self, other: &Self) -> Self {
        assert_eq!(self.grid.len(), other.grid.len(), "strong label shape mismatch");
        Self { grid: self.grid.iter().zip(&other.grid).map(|(a, b)| a | b).collect(), ..self.clone() }
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.grid.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakLabel(pub Vec<u8>);

impl WeakLabel {
    pub fn or(&self, other: &Self) -> Self {
        assert_eq!(self.0.len(), other.0.len(), "weak label length mismatch");
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a | b).collect())
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub id: String,
    pub waveform: Waveform,
    pub kind: ClipKind,
    pub strong: Option<StrongLabel>,
    pub weak: Option<WeakLabel>,
    /// Ground truth kept for evaluation only; training never reads it.
    pub events: Option<EventList>,
}

impl LabeledClip {
    pub fn strong(id: String, waveform: Waveform, events: EventList, n_frames: usize, frame_hop_s: f64) -> Self {
        let strong = StrongLabel::from_events(&events, n_frames, frame_hop_s);
        Self { id, waveform, kind: ClipKind::Strong, weak: Some(strong.weak()), strong: Some(strong), events: Some(events) }
    }

    pub fn unlabeled(id: String, waveform: Waveform) -> Self {
        Self { id, waveform, kind: ClipKind::Unlabeled, strong: None, weak: None, events: None }
    }

    /// Drops the strong label, keeping the clip-level weak label.
    pub fn weaken(&self) -> Result<Self> {
        if self.kind != ClipKind::Strong {
            return Err(DatasetError::WrongKind(self.kind));
        }
        Ok(Self { kind: ClipKind::Weak, strong: None, ..self.clone() })
    }

    /// Drops all training labels.
    pub fn strip(&self) -> Result<Self> {
        if self.kind != ClipKind::Strong {
            return Err(DatasetError::WrongKind(self.kind));
        }
        Ok(Self { kind: ClipKind::Unlabeled, strong: None, weak: None, ..self.clone() })
    }

    /// Checks the label-presence invariant for the clip's kind.
    pub fn is_consistent(&self) -> bool {
        match self.kind {
            ClipKind::Strong => match (&self.strong, &self.weak) {
                (Some(s), Some(w)) => self.events.is_some() && s.weak() == *w,
                _ => false,
            },
            ClipKind::Weak => self.weak.is_some() && self.strong.is_none(),
            ClipKind::Unlabeled => self.weak.is_none() && self.strong.is_none(),
        }
    }
}
