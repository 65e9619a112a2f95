use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::Result;
use crate::signal::{istft_centered, resample, stft_centered, ComplexSpectrogram, Waveform};

const STRETCH_WINDOW: usize = 1024;
const STRETCH_HOP: usize = 256;

/// Playback-speed change: `factor > 1` plays faster (shorter, higher).
/// Output length is `round(len / factor)`; the caller pads or crops.
pub fn speed(w: &Waveform, factor: f64) -> Result<Waveform> {
    Ok(resample(w, 1.0 / factor)?)
}

/// Circular rotation by `round(fraction * len)` samples towards later times.
pub fn time_shift(w: &Waveform, fraction: f64) -> Waveform {
    let n = w.len();
    let shift = ((fraction * n as f64).round() as i64).rem_euclid(n as i64) as usize;
    let mut samples = w.samples.clone();
    samples.rotate_right(shift);
    Waveform { samples, sample_rate: w.sample_rate }
}

fn phase_vocoder(spec: &ComplexSpectrogram, rate: f64) -> ComplexSpectrogram {
    use std::f64::consts::PI;
    let n_bins = spec.n_bins;
    let n_out = (spec.n_frames as f64 / rate).ceil() as usize;
    let advance: Vec<f64> = (0..n_bins).map(|k| 2.0 * PI * k as f64 * spec.hop as f64 / spec.window_size as f64).collect();
    let zero = Complex64::new(0.0, 0.0);
    let column = |t: usize, k: usize| if t < spec.n_frames { spec.frames[t * n_bins + k] } else { zero };
    let mut phase: Vec<f64> = (0..n_bins).map(|k| column(0, k).arg()).collect();
    let mut frames = Vec::with_capacity(n_out * n_bins);
    for i in 0..n_out {
        let step = i as f64 * rate;
        let t = step.floor() as usize;
        let alpha = step - t as f64;
        for k in 0..n_bins {
            let (c0, c1) = (column(t, k), column(t + 1, k));
            let mag = (1.0 - alpha) * c0.norm() + alpha * c1.norm();
            frames.push(Complex64::from_polar(mag, phase[k]));
            let mut dphase = c1.arg() - c0.arg() - advance[k];
            dphase -= 2.0 * PI * (dphase / (2.0 * PI)).round();
            phase[k] += advance[k] + dphase;
        }
    }
    ComplexSpectrogram { frames, n_frames: n_out, ..spec.clone() }
}

/// Phase-vocoder time stretch keeping pitch: output length `round(len / factor)`.
pub fn time_stretch(w: &Waveform, factor: f64) -> Result<Waveform> {
    let x = w.as_f64();
    let mut padded = x.clone();
    if padded.len() < STRETCH_WINDOW {
        padded.resize(STRETCH_WINDOW, 0.0);
    }
    let spec = stft_centered(&padded, STRETCH_WINDOW, STRETCH_HOP)?;
    let out_len = ((x.len() as f64 / factor).round() as usize).max(1);
    let y = istft_centered(&phase_vocoder(&spec, factor), out_len);
    Ok(Waveform::from_f64(&y, w.sample_rate))
}

/// Pitch shift by `semitones` keeping the length: resample then time-stretch back.
pub fn pitch_shift(w: &Waveform, semitones: f64) -> Result<Waveform> {
    let ratio = 2f64.powf(semitones / 12.0);
    let raised = resample(w, 1.0 / ratio)?;
    let restored = time_stretch(&raised, 1.0 / ratio)?;
    Ok(restored.pad_or_crop(w.len()))
}

/// Feed-forward compressor preset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrcMode {
    pub threshold_db: f64,
    pub ratio: f64,
    pub attack_s: f64,
    pub release_s: f64,
    pub makeup_db: f64,
}

pub const DRC_MODES: [DrcMode; 4] = [
    DrcMode { threshold_db: -20.0, ratio: 4.0, attack_s: 0.005, release_s: 0.050, makeup_db: 0.0 },
    DrcMode { threshold_db: -30.0, ratio: 8.0, attack_s: 0.002, release_s: 0.100, makeup_db: 0.0 },
    DrcMode { threshold_db: -15.0, ratio: 2.0, attack_s: 0.010, release_s: 0.200, makeup_db: 0.0 },
    DrcMode { threshold_db: -25.0, ratio: 6.0, attack_s: 0.001, release_s: 0.030, makeup_db: 0.0 },
];

/// Hard-knee compressor driven by a one-pole peak envelope follower.
pub fn drc(w: &Waveform, mode: &DrcMode) -> Waveform {
    let sr = w.sample_rate as f64;
    let attack = (-1.0 / (mode.attack_s * sr)).exp();
    let release = (-1.0 / (mode.release_s * sr)).exp();
    let mut env = 0.0f64;
    let samples = w
        .samples
        .iter()
        .map(|&s| {
            let x = s as f64;
            let a = x.abs();
            let coeff = if a > env { attack } else { release };
            env = coeff * env + (1.0 - coeff) * a;
            let level = 20.0 * env.max(1e-12).log10();
            let reduction = if level > mode.threshold_db {
                mode.threshold_db + (level - mode.threshold_db) / mode.ratio - level
            } else {
                0.0
            };
            (x * 10f64.powf((reduction + mode.makeup_db) / 20.0)) as f32
        })
        .collect();
    Waveform { samples, sample_rate: w.sample_rate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::stft;

    const SR: u32 = 16000;

    fn sine(freq: f64, len: usize) -> Waveform {
        let x: Vec<f64> = (0..len).map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / SR as f64).sin()).collect();
        Waveform::from_f64(&x, SR)
    }

    /// Frequency of the strongest bin summed over all frames.
    fn peak_hz(w: &Waveform) -> f64 {
        let s = stft(w, 2048, 512).unwrap();
        let mut energy = vec![0.0; s.n_bins];
        for t in 0..s.n_frames {
            for (e, c) in energy.iter_mut().zip(s.frame(t)) {
                *e += c.norm_sqr();
            }
        }
        let k = (1..s.n_bins - 1).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
        // Parabolic refinement on log energy.
        let (l, c, r) = (energy[k - 1].ln(), energy[k].ln(), energy[k + 1].ln());
        let delta = 0.5 * (l - r) / (l - 2.0 * c + r);
        (k as f64 + delta) * SR as f64 / 2048.0
    }

    fn rms_rel_err(a: &Waveform, b: &Waveform) -> f64 {
        let num: f64 = a.samples.iter().zip(&b.samples).map(|(x, y)| ((x - y) as f64).powi(2)).sum();
        let den: f64 = a.samples.iter().map(|x| (*x as f64).powi(2)).sum();
        (num / den).sqrt()
    }

    const BIN: f64 = SR as f64 / 2048.0;

    #[test]
    fn speed_lengths_and_pitch() {
        let w = sine(440.0, 16000);
        assert_eq!(speed(&w, 1.25).unwrap().len(), 12800);
        assert_eq!(speed(&w, 1.0 / 1.25).unwrap().len(), 20000);
        let f = peak_hz(&speed(&w, 1.25).unwrap());
        assert!((f - 550.0).abs() <= BIN, "{f}");
    }

    #[test]
    fn time_shift_rolls() {
        let w = Waveform::new(vec![1.0, 2.0, 3.0, 4.0], SR).unwrap();
        assert_eq!(time_shift(&w, 0.5).samples, vec![3.0, 4.0, 1.0, 2.0]);
        let x = sine(300.0, 1001);
        let y = time_shift(&x, 0.3);
        let e = |w: &Waveform| w.samples.iter().map(|&s| s as f64 * s as f64).sum::<f64>();
        assert!((e(&x) - e(&y)).abs() < 1e-9 * e(&x));
        let back = time_shift(&y, 0.7);
        // round(0.3 * 1001) + round(0.7 * 1001) = 300 + 701 = 1001, a full turn.
        assert_eq!(back, x);
    }

    #[test]
    fn stretch_identity_and_pitch() {
        let w = sine(440.0, 16000);
        let same = time_stretch(&w, 1.0).unwrap();
        assert_eq!(same.len(), w.len());
        assert!(rms_rel_err(&w, &same) < 1e-3);

        let fast = time_stretch(&w, 1.5).unwrap();
        let expect_len = 16000.0 / 1.5;
        assert!((fast.len() as f64 - expect_len).abs() <= STRETCH_HOP as f64);
        let f = peak_hz(&fast);
        assert!((f - 440.0).abs() / 440.0 < 0.01, "{f}");
        assert_eq!(time_stretch(&Waveform::silence(5000, SR), 1.3).unwrap().peak(), 0.0);
    }

    #[test]
    fn pitch_shift_preserves_length_and_moves_pitch() {
        let w = sine(440.0, 16000);
        assert!(rms_rel_err(&w, &pitch_shift(&w, 0.0).unwrap()) < 1e-3);
        for s in 1..=10 {
            for sign in [1.0, -1.0] {
                assert_eq!(pitch_shift(&w, sign * 0.5 * s as f64).unwrap().len(), w.len());
            }
        }
        let up = pitch_shift(&pitch_shift(&pitch_shift(&w, 5.0).unwrap(), 5.0).unwrap(), 2.0).unwrap();
        let f = peak_hz(&up);
        assert!((f - 880.0).abs() <= 2.0 * BIN, "{f}");
    }

    #[test]
    fn drc_cases() {
        let silence = Waveform::silence(1000, SR);
        assert_eq!(drc(&silence, &DRC_MODES[0]).samples, silence.samples);

        // -40 dBFS peak stays below every threshold.
        let quiet = Waveform::from_f64(&sine(300.0, 4000).as_f64().iter().map(|v| v * 0.02).collect::<Vec<_>>(), SR);
        for mode in &DRC_MODES {
            let out = drc(&quiet, mode);
            for (a, b) in quiet.samples.iter().zip(&out.samples) {
                assert!((a - b).abs() <= 1e-6);
            }
        }

        // Static curve: a 0 dBFS square wave settles at -20 + 20/4 = -15 dBFS.
        let square: Vec<f32> = (0..16000).map(|i| if (i / 40) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let out = drc(&Waveform::new(square, SR).unwrap(), &DRC_MODES[0]);
        let tail = &out.samples[8000..];
        let level = 20.0 * (tail.iter().map(|s| (*s as f64).powi(2)).sum::<f64>() / tail.len() as f64).sqrt().log10();
        assert!((level + 15.0).abs() <= 1.0, "{level}");
        for mode in &DRC_MODES {
            let input = sine(500.0, 8000);
            assert!(drc(&input, mode).peak() <= input.peak() * 10f32.powf(mode.makeup_db as f32 / 20.0) + 1e-6);
        }
    }
}
