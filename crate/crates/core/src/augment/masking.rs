use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::signal::{MelSpectrogram, MEL_FLOOR};

/// A masked block `[start, start + len)` along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRegion {
    pub start: usize,
    pub len: usize,
}

/// One masking unit: 5% of the axis length, at least one element.
pub fn mask_unit(axis_len: usize) -> usize {
    ((0.05 * axis_len as f64).round() as usize).clamp(1, axis_len.max(1))
}

/// Places one unit-length block per start draw `u` in `[0, 1)`.
pub fn mask_regions(axis_len: usize, starts: &[f64]) -> Vec<MaskRegion> {
    let len = mask_unit(axis_len);
    let slots = axis_len - len + 1;
    starts
        .iter()
        .map(|&u| MaskRegion { start: ((u * slots as f64).floor() as usize).min(slots - 1), len })
        .collect()
}

fn floor_value() -> f32 {
    MEL_FLOOR.ln() as f32
}

pub fn apply_time_mask(m: &MelSpectrogram, regions: &[MaskRegion]) -> MelSpectrogram {
    let mut out = m.clone();
    for r in regions {
        for t in r.start..(r.start + r.len).min(m.n_frames) {
            out.data[t * m.n_mels..(t + 1) * m.n_mels].fill(floor_value());
        }
    }
    out
}

pub fn apply_freq_mask(m: &MelSpectrogram, regions: &[MaskRegion]) -> MelSpectrogram {
    let mut out = m.clone();
    for r in regions {
        let end = (r.start + r.len).min(m.n_mels);
        for t in 0..m.n_frames {
            out.data[t * m.n_mels + r.start..t * m.n_mels + end].fill(floor_value());
        }
    }
    out
}

/// Sets `units` randomly placed blocks of frames to the mel floor.
pub fn time_mask<R: Rng + ?Sized>(m: &MelSpectrogram, units: usize, rng: &mut R) -> (MelSpectrogram, Vec<MaskRegion>) {
    let starts: Vec<f64> = (0..units).map(|_| rng.gen()).collect();
    let regions = mask_regions(m.n_frames, &starts);
    (apply_time_mask(m, &regions), regions)
}

/// Sets `units` randomly placed blocks of mel bins to the mel floor.
pub fn freq_mask<R: Rng + ?Sized>(m: &MelSpectrogram, units: usize, rng: &mut R) -> (MelSpectrogram, Vec<MaskRegion>) {
    let starts: Vec<f64> = (0..units).map(|_| rng.gen()).collect();
    let regions = mask_regions(m.n_mels, &starts);
    (apply_freq_mask(m, &regions), regions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::keyed;

    fn spec(frames: usize, mels: usize) -> MelSpectrogram {
        MelSpectrogram {
            data: (0..frames * mels).map(|i| (i % 97) as f32 * 0.1).collect(),
            n_frames: frames,
            n_mels: mels,
            frame_hop_s: 0.016,
        }
    }

    fn masked_frames(m: &MelSpectrogram) -> Vec<usize> {
        (0..m.n_frames).filter(|&t| m.frame(t).iter().all(|&v| v == floor_value())).collect()
    }

    #[test]
    fn one_unit_of_time() {
        let m = spec(100, 8);
        let (out, regions) = time_mask(&m, 1, &mut keyed(&[1]));
        let frames = masked_frames(&out);
        assert_eq!(frames.len(), 5);
        assert!(frames.windows(2).all(|p| p[1] == p[0] + 1));
        assert_eq!(frames[0], regions[0].start);
    }

    #[test]
    fn ten_units_bounded_and_rest_untouched() {
        let m = spec(100, 8);
        for seed in 0..50 {
            let (out, regions) = time_mask(&m, 10, &mut keyed(&[seed]));
            assert!(masked_frames(&out).len() <= 50);
            let inside = |t: usize| regions.iter().any(|r| t >= r.start && t < r.start + r.len);
            for t in (0..100).filter(|&t| !inside(t)) {
                assert_eq!(out.frame(t), m.frame(t));
            }
        }
    }

    #[test]
    fn freq_units() {
        let m = spec(20, 64);
        let (out, regions) = freq_mask(&m, 1, &mut keyed(&[3]));
        let r = regions[0];
        assert_eq!(r.len, 3);
        for t in 0..20 {
            for k in 0..64 {
                if k >= r.start && k < r.start + 3 {
                    assert_eq!(out.at(t, k), floor_value());
                } else {
                    assert_eq!(out.at(t, k).to_bits(), m.at(t, k).to_bits());
                }
            }
        }
        let (out, _) = freq_mask(&m, 10, &mut keyed(&[4]));
        let masked_bins = (0..64).filter(|&k| (0..20).all(|t| out.at(t, k) == floor_value())).count();
        assert!(masked_bins <= 30);
    }
}
