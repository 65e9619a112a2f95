use serde::{Deserialize, Serialize};

use super::policy::Applied;
use super::{AugmentError, Result};

/// How labels and reference predictions follow time-warping transforms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    /// Shift and rescale frames along with the audio.
    #[default]
    Transport,
    /// Keep the original frame grid regardless of the transform.
    Inherit,
}

/// For every output frame, the source frame it reads from (`None` reads zero).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameMap {
    src: Vec<Option<usize>>,
}

impl FrameMap {
    pub fn identity(n: usize) -> Self {
        Self { src: (0..n).map(Some).collect() }
    }

    /// Circular shift by `round(fraction * n)` frames, matching the waveform roll.
    pub fn roll(n: usize, fraction: f64) -> Self {
        if n == 0 {
            return Self { src: Vec::new() };
        }
        let k = ((fraction * n as f64).round() as i64).rem_euclid(n as i64) as usize;
        Self { src: (0..n).map(|t| Some((t + n - k) % n)).collect() }
    }

    /// Time axis compressed by `factor` (> 1 shortens), then padded or cropped to `n`.
    /// Output frame `t` reads source frame `floor((t + 0.5) * factor)`.
    pub fn rescale(n: usize, factor: f64) -> Self {
        Self {
            src: (0..n)
                .map(|t| {
                    let s = ((t as f64 + 0.5) * factor).floor() as usize;
                    (s < n).then_some(s)
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn source(&self, t: usize) -> Option<usize> {
        self.src[t]
    }

    pub fn is_identity(&self) -> bool {
        self.src.iter().enumerate().all(|(t, s)| *s == Some(t))
    }

    /// The map that applies `self` first and `next` second.
    pub fn then(&self, next: &FrameMap) -> FrameMap {
        FrameMap { src: next.src.iter().map(|s| s.and_then(|s| self.src[s])).collect() }
    }

    /// Moves rows of a row-major `frames x n_classes` grid.
    pub fn apply<T: Copy>(&self, grid: &[T], n_classes: usize, fill: T) -> Vec<T> {
        let mut out = Vec::with_capacity(self.src.len() * n_classes);
        for s in &self.src {
            match s {
                Some(s) => out.extend_from_slice(&grid[s * n_classes..(s + 1) * n_classes]),
                None => out.extend(std::iter::repeat_n(fill, n_classes)),
            }
        }
        out
    }

    /// Accumulates the gradient of `apply` back onto the source grid.
    pub fn adjoint_add(&self, grad_out: &[f64], n_classes: usize, grad_src: &mut [f64]) {
        for (t, s) in self.src.iter().enumerate() {
            if let Some(s) = s {
                for c in 0..n_classes {
                    grad_src[s * n_classes + c] += grad_out[t * n_classes + c];
                }
            }
        }
    }
}

/// Elementwise OR of two prediction grids after thresholding at 0.5.
pub fn or_binarized(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| ((x >= 0.5) || (y >= 0.5)) as u8 as f64).collect()
}

/// Where each frame of an augmented view comes from: the clip itself, and
/// for every mixup step a batch partner, each through its own frame map.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewTransport {
    pub own: FrameMap,
    pub partners: Vec<(usize, FrameMap)>,
}

impl ViewTransport {
    /// Without mixup the transported reference is a linear function of the
    /// original predictions and gradients flow through it.
    pub fn is_differentiable(&self) -> bool {
        self.partners.is_empty()
    }

    /// Maps reference strong predictions into the view's time base.
    /// `grids[i]` is the prediction on batch clip `i`; `own` indexes this clip.
    pub fn strong<G: AsRef<[f64]>>(&self, own: usize, grids: &[G], n_classes: usize) -> Result<Vec<f64>> {
        let n = self.own.len();
        for g in grids {
            let got = g.as_ref().len();
            if got != n * n_classes {
                return Err(AugmentError::GridMismatch { got, frames: n, classes: n_classes });
            }
        }
        let mut out = self.own.apply(grids[own].as_ref(), n_classes, 0.0);
        for (p, map) in &self.partners {
            out = or_binarized(&out, &map.apply(grids[*p].as_ref(), n_classes, 0.0));
        }
        Ok(out)
    }

    /// Clip-level reference: unchanged without mixup, otherwise binarized OR of parents.
    pub fn weak<G: AsRef<[f64]>>(&self, own: usize, weak: &[G]) -> Vec<f64> {
        let mut out = weak[own].as_ref().to_vec();
        for (p, _) in &self.partners {
            out = or_binarized(&out, weak[*p].as_ref());
        }
        out
    }
}

/// Frame map of a single waveform transform on an `n`-frame grid.
pub fn step_map(step: &Applied, n: usize, mode: TransportMode) -> FrameMap {
    if mode == TransportMode::Inherit {
        return FrameMap::identity(n);
    }
    match step {
        Applied::Speed { factor } | Applied::TimeStretch { factor } => FrameMap::rescale(n, *factor),
        Applied::TimeShift { fraction } => FrameMap::roll(n, *fraction),
        _ => FrameMap::identity(n),
    }
}

/// Composes the transport of a transform chain on an `n`-frame output grid.
pub fn transport(applied: &[Applied], n: usize, mode: TransportMode) -> ViewTransport {
    let mut own = FrameMap::identity(n);
    let mut partners: Vec<(usize, FrameMap)> = Vec::new();
    for step in applied {
        if let Applied::Mixup { partner } = step {
            partners.push((*partner, FrameMap::identity(n)));
            continue;
        }
        let m = step_map(step, n, mode);
        own = own.then(&m);
        for (_, p) in &mut partners {
            *p = p.then(&m);
        }
    }
    ViewTransport { own, partners }
}
