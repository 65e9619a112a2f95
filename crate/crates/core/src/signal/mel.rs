use serde::{Deserialize, Serialize};

use super::{stft, Result, SignalError, Waveform};

/// Additive floor inside the log; silent frames map to `ln(MEL_FLOOR)`.
pub const MEL_FLOOR: f64 = 1e-10;

/// Feature extraction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub window_size: usize,
    pub hop: usize,
    pub n_mels: usize,
    /// Clips are zero-padded or cropped to this duration before analysis.
    pub clip_len_s: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl FeatureConfig {
    pub fn desk() -> Self {
        Self { sample_rate: 16000, window_size: 1024, hop: 256, n_mels: 64, clip_len_s: 8.0 }
    }

    /// 2048-sample window, 255-sample hop, 128 mel bins on 10 s clips.
    pub fn full_scale() -> Self {
        Self { sample_rate: 16000, window_size: 2048, hop: 255, n_mels: 128, clip_len_s: 10.0 }
    }

    pub fn clip_samples(&self) -> usize {
        (self.clip_len_s * self.sample_rate as f64).round() as usize
    }

    pub fn n_frames(&self) -> usize {
        super::frame_count(self.clip_samples(), self.window_size, self.hop).unwrap_or(0)
    }

    pub fn frame_hop_s(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }
}

/// Row-major `n_frames x n_mels` log-mel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub data: Vec<f32>,
    pub n_frames: usize,
    pub n_mels: usize,
    pub frame_hop_s: f64,
}

impl MelSpectrogram {
    pub fn at(&self, t: usize, k: usize) -> f32 {
        self.data[t * self.n_mels + k]
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.n_mels..(t + 1) * self.n_mels]
    }

    /// Appends floor-valued frames until the frame count is a multiple of `multiple`.
    pub fn pad_frames_to_multiple(mut self, multiple: usize) -> Self {
        if multiple > 1 {
            let target = self.n_frames.div_ceil(multiple) * multiple;
            self.data.resize(target * self.n_mels, MEL_FLOOR.ln() as f32);
            self.n_frames = target;
        }
        self
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK-mel filters stored sparsely: each row keeps only its support.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub n_fft_bins: usize,
    rows: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_fft_bins: usize, n_mels: usize, sample_rate: u32) -> Result<Self> {
        if n_mels == 0 || n_mels >= n_fft_bins {
            return Err(SignalError::TooManyMels { n_mels, n_bins: n_fft_bins });
        }
        let n_fft = 2 * (n_fft_bins - 1);
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let mel_max = hz_to_mel(sample_rate as f64 / 2.0);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
            .collect();
        let mut rows = Vec::with_capacity(n_mels);
        for m in 0..n_mels {
            let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut weights = vec![0.0; n_fft_bins];
            for (k, w) in weights.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                if f > lo && f < hi {
                    *w = if f <= c { (f - lo) / (c - lo) } else { (hi - f) / (hi - c) };
                }
            }
            if weights.iter().all(|&w| w <= 0.0) {
                // Filter narrower than one bin: fall back to the nearest bin.
                let k = ((c / bin_hz).round() as usize).min(n_fft_bins - 1);
                weights[k] = 1.0;
            }
            let first = weights.iter().position(|&w| w > 0.0).unwrap_or(0);
            let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
            rows.push((first, weights[first..=last].to_vec()));
        }
        Ok(Self { n_fft_bins, rows, centers_hz: edges[1..=n_mels].to_vec() })
    }

    pub fn n_mels(&self) -> usize {
        self.rows.len()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|(first, w)| {
                let mut row = vec![0.0; self.n_fft_bins];
                row[*first..first + w.len()].copy_from_slice(w);
                row
            })
            .collect()
    }

    /// Applies the filterbank to one power spectrum frame.
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for ((first, w), o) in self.rows.iter().zip(out.iter_mut()) {
            *o = w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Dense `n_mels x n_fft_bins` HTK-mel filter matrix.
pub fn mel_matrix(n_fft_bins: usize, n_mels: usize, sample_rate: u32) -> Result<Vec<Vec<f64>>> {
    Ok(MelFilterbank::new(n_fft_bins, n_mels, sample_rate)?.dense())
}

/// `ln(mel · |STFT|² + MEL_FLOOR)` of the clip after tail pad/crop to the configured length.
pub fn log_mel(w: &Waveform, cfg: &FeatureConfig) -> Result<MelSpectrogram> {
    let fitted = w.clone().pad_or_crop(cfg.clip_samples());
    let spec = stft(&fitted, cfg.window_size, cfg.hop)?;
    let bank = MelFilterbank::new(spec.n_bins, cfg.n_mels, cfg.sample_rate)?;
    let mut data = Vec::with_capacity(spec.n_frames * cfg.n_mels);
    let mut power = vec![0.0; spec.n_bins];
    let mut mel = vec![0.0; cfg.n_mels];
    for t in 0..spec.n_frames {
        for (p, c) in power.iter_mut().zip(spec.frame(t)) {
            *p = c.norm_sqr();
        }
        bank.apply(&power, &mut mel);
        data.extend(mel.iter().map(|&m| (m + MEL_FLOOR).ln() as f32));
    }
    Ok(MelSpectrogram {
        data,
        n_frames: spec.n_frames,
        n_mels: cfg.n_mels,
        frame_hop_s: cfg.frame_hop_s(),
    })
}
