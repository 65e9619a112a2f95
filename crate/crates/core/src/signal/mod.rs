//! Deterministic DSP primitives shared by augmentation and feature extraction.

mod io;
mod mel;
mod resample;
mod stft;

pub use io::{read_audio, read_ssf0, read_wav, write_audio, write_ssf0, write_wav, AudioFormat};
pub use mel::{log_mel, mel_matrix, FeatureConfig, MelFilterbank, MelSpectrogram, MEL_FLOOR};
pub use resample::resample;
pub use stft::{frame_count, hann_periodic, istft_centered, stft, stft_centered, ComplexSpectrogram};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("signal of {len} samples is shorter than one {window}-sample window")]
    TooShort { len: usize, window: usize },
    #[error("window size and hop must be positive")]
    ZeroFrameSize,
    #[error("resample factor {0} outside [0.1, 10]")]
    FactorOutOfRange(f64),
    #[error("n_mels ({n_mels}) must be smaller than the number of FFT bins ({n_bins})")]
    TooManyMels { n_mels: usize, n_bins: usize },
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error("bad audio file: {0}")]
    BadFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// Mono sample buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    /// Validating constructor: non-empty, finite samples and a positive rate.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(SignalError::InvalidWaveform("sample rate is zero".into()));
        }
        if samples.is_empty() {
            return Err(SignalError::InvalidWaveform("no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(SignalError::InvalidWaveform(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64).collect()
    }

    pub fn from_f64(samples: &[f64], sample_rate: u32) -> Self {
        Self { samples: samples.iter().map(|&s| s as f32).collect(), sample_rate }
    }

    /// Zero-pads or crops the tail to exactly `len` samples.
    pub fn pad_or_crop(mut self, len: usize) -> Self {
        self.samples.resize(len, 0.0);
        self
    }
}
