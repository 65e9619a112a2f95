use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{Result, SignalError, Waveform};

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Number of full frames, or `None` when the signal is shorter than one window.
pub fn frame_count(len: usize, window_size: usize, hop: usize) -> Option<usize> {
    if window_size == 0 || hop == 0 || len < window_size {
        None
    } else {
        Some(1 + (len - window_size) / hop)
    }
}

/// Row-major `n_frames x n_bins` complex spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub frames: Vec<Complex64>,
    pub n_frames: usize,
    pub n_bins: usize,
    pub window_size: usize,
    pub hop: usize,
}

impl ComplexSpectrogram {
    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.frames[t * self.n_bins..(t + 1) * self.n_bins]
    }
}

fn analyse(samples: &[f64], window_size: usize, hop: usize) -> Result<ComplexSpectrogram> {
    if window_size == 0 || hop == 0 {
        return Err(SignalError::ZeroFrameSize);
    }
    let n_frames = frame_count(samples.len(), window_size, hop)
        .ok_or(SignalError::TooShort { len: samples.len(), window: window_size })?;
    let n_bins = window_size / 2 + 1;
    let window = hann_periodic(window_size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); window_size];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut frames = Vec::with_capacity(n_frames * n_bins);
    for t in 0..n_frames {
        let start = t * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(samples[start + i] * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        frames.extend_from_slice(&buf[..n_bins]);
    }
    Ok(ComplexSpectrogram { frames, n_frames, n_bins, window_size, hop })
}

/// Hann-windowed STFT without centre padding: frame `t` starts at sample `t * hop`.
pub fn stft(w: &Waveform, window_size: usize, hop: usize) -> Result<ComplexSpectrogram> {
    analyse(&w.as_f64(), window_size, hop)
}

/// STFT of a signal zero-padded by `window_size / 2` on both sides, so frame `t`
/// is centred on sample `t * hop`. Used by the phase vocoder.
pub fn stft_centered(samples: &[f64], window_size: usize, hop: usize) -> Result<ComplexSpectrogram> {
    let half = window_size / 2;
    let mut padded = vec![0.0; samples.len() + 2 * half];
    padded[half..half + samples.len()].copy_from_slice(samples);
    analyse(&padded, window_size, hop)
}

/// Weighted overlap-add inverse of [`stft_centered`], trimmed to `length` samples.
pub fn istft_centered(spec: &ComplexSpectrogram, length: usize) -> Vec<f64> {
    let n = spec.window_size;
    let half = n / 2;
    let window = hann_periodic(n);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n);
    let total = (spec.n_frames.saturating_sub(1)) * spec.hop + n;
    let mut out = vec![0.0; total.max(length + half)];
    let mut norm = vec![0.0; out.len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    for t in 0..spec.n_frames {
        let frame = spec.frame(t);
        buf[..spec.n_bins].copy_from_slice(frame);
        for k in spec.n_bins..n {
            buf[k] = frame[n - k].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);
        let start = t * spec.hop;
        for i in 0..n {
            out[start + i] += buf[i].re / n as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    let floor = 1e-8;
    (0..length)
        .map(|i| {
            let j = i + half;
            if j < out.len() && norm[j] > floor {
                out[j] / norm[j]
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let w = Waveform::silence(4000, 16000);
        let s = stft(&w, 512, 128).unwrap();
        assert!(s.frames.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn frame_count_example() {
        let w = Waveform::silence(2048 + 255, 16000);
        assert_eq!(stft(&w, 2048, 255).unwrap().n_frames, 2);
        assert_eq!(stft(&w, 2048, 255).unwrap().n_bins, 1025);
    }

    #[test]
    fn too_short_is_an_error() {
        let w = Waveform::silence(100, 16000);
        assert!(matches!(stft(&w, 256, 64), Err(SignalError::TooShort { .. })));
        assert!(matches!(stft(&w, 64, 0), Err(SignalError::ZeroFrameSize)));
    }

    #[test]
    fn frame_count_formula_on_random_shapes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let win = rng.gen_range(1..300);
            let hop = rng.gen_range(1..200);
            let len = rng.gen_range(win..win + 2000);
            // Count frame starts directly.
            let mut brute = 0;
            let mut start = 0;
            while start + win <= len {
                brute += 1;
                start += hop;
            }
            assert_eq!(frame_count(len, win, hop), Some(brute));
        }
    }

    #[test]
    fn linearity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f32> = (0..3000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = Waveform::new(x.clone(), 8000).unwrap();
        let s = stft(&w, 256, 100).unwrap();
        // Power-of-two gains scale f32 samples exactly, so the check is entrywise.
        // Other gains round each input sample, so they are checked against the frame peak.
        for &(a, entrywise) in &[(0.25f32, true), (4.0, true), (0.37, false)] {
            let wa = Waveform::new(x.iter().map(|v| v * a).collect(), 8000).unwrap();
            let sa = stft(&wa, 256, 100).unwrap();
            for t in 0..s.n_frames {
                let peak = s.frame(t).iter().map(|c| c.norm()).fold(0.0, f64::max) * a as f64;
                for (p, q) in s.frame(t).iter().zip(sa.frame(t)) {
                    let expect = p * a as f64;
                    let scale = if entrywise { expect.norm() } else { peak };
                    assert!((q - expect).norm() <= 1e-6 * scale, "gain {a}");
                }
            }
        }
    }

    #[test]
    fn centered_round_trip_is_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..5000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = stft_centered(&x, 512, 128).unwrap();
        let y = istft_centered(&s, x.len());
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "max error {err}");
    }
}
