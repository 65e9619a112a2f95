use rand::Rng;
use serde::{Deserialize, Serialize};

use super::store::{Dataset, DatasetMeta};
use super::{DatasetError, LabeledClip, Result};
use crate::eval::EventList;
use crate::rng::{domain, keyed, Rng as KeyedRng};
use crate::signal::{AudioFormat, FeatureConfig, Waveform};

/// Sound primitive used to render events of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClassPrimitive {
    /// Harmonic tone burst (fundamental plus 2nd and 3rd harmonics at -6 and -12 dB).
    Tone { freq_hz: f64 },
    /// Train of linear upward sweeps, one sweep per `period_s`.
    Chirp { start_hz: f64, end_hz: f64, period_s: f64 },
    /// White noise through a band-pass biquad.
    BandNoise { center_hz: f64, q: f64 },
}

/// Class 0 is a 440 Hz tone, odd classes are chirps in rising ranges, the
/// remaining classes are band-passed noise at rising centre frequencies.
pub fn class_table(n_classes: usize) -> Vec<ClassPrimitive> {
    (0..n_classes)
        .map(|c| {
            if c == 0 {
                ClassPrimitive::Tone { freq_hz: 440.0 * 2f64.powf(c as f64 / 2.0) }
            } else if c % 2 == 1 {
                let start = 700.0 * 1.6f64.powi((c / 2) as i32);
                ClassPrimitive::Chirp { start_hz: start, end_hz: (2.0 * start).min(7500.0), period_s: 0.25 }
            } else {
                ClassPrimitive::BandNoise { center_hz: 1800.0 * 1.45f64.powi((c / 2 - 1) as i32), q: 4.0 }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_classes: usize,
    pub sample_rate: u32,
    pub clip_len_s: f64,
    /// Output-frame grid the strong labels are rasterised on.
    pub grid_frames: usize,
    pub grid_hop_s: f64,
    pub background_dbfs: f64,
    pub event_dbfs: (f64, f64),
    pub events_per_clip: (usize, usize),
    pub event_duration_s: (f64, f64),
    /// Minimum silence between two events of the same class.
    pub same_class_gap_s: f64,
}

impl SynthConfig {
    /// Label grid matching `features` after padding to a multiple of `pool_factor` and pooling.
    pub fn for_features(features: &FeatureConfig, pool_factor: usize, n_classes: usize) -> Self {
        let frames = features.n_frames().div_ceil(pool_factor) * pool_factor;
        Self {
            n_classes,
            sample_rate: features.sample_rate,
            clip_len_s: features.clip_len_s,
            grid_frames: frames / pool_factor,
            grid_hop_s: features.frame_hop_s() * pool_factor as f64,
            background_dbfs: -30.0,
            event_dbfs: (-26.0, -6.0),
            events_per_clip: (1, 3),
            event_duration_s: (0.5, 3.0),
            same_class_gap_s: 0.2,
        }
    }

    pub fn clip_samples(&self) -> usize {
        (self.clip_len_s * self.sample_rate as f64).round() as usize
    }
}

fn db_to_amp(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn pink_noise(rng: &mut KeyedRng, n: usize) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    (0..n)
        .map(|_| {
            let white: f64 = rng.gen_range(-1.0..1.0);
            b[0] = 0.99886 * b[0] + white * 0.0555179;
            b[1] = 0.99332 * b[1] + white * 0.0750759;
            b[2] = 0.96900 * b[2] + white * 0.1538520;
            b[3] = 0.86650 * b[3] + white * 0.3104856;
            b[4] = 0.55000 * b[4] + white * 0.5329522;
            b[5] = -0.7616 * b[5] - white * 0.0168980;
            let pink = b.iter().sum::<f64>() + white * 0.5362;
            b[6] = white * 0.115926;
            pink
        })
        .collect()
}

fn band_noise(rng: &mut KeyedRng, n: usize, center_hz: f64, q: f64, sr: f64) -> Vec<f64> {
    // RBJ constant-peak band-pass.
    let w0 = 2.0 * std::f64::consts::PI * center_hz / sr;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    (0..n)
        .map(|_| {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = x;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

fn render(primitive: ClassPrimitive, rng: &mut KeyedRng, n: usize, sr: f64) -> Vec<f64> {
    use std::f64::consts::PI;
    match primitive {
        ClassPrimitive::Tone { freq_hz } => (0..n)
            .map(|i| {
                let t = i as f64 / sr;
                (2.0 * PI * freq_hz * t).sin()
                    + 0.5 * (4.0 * PI * freq_hz * t).sin()
                    + 0.25 * (6.0 * PI * freq_hz * t).sin()
            })
            .collect(),
        ClassPrimitive::Chirp { start_hz, end_hz, period_s } => {
            let period = (period_s * sr).round() as usize;
            (0..n)
                .map(|i| {
                    let k = i % period;
                    let tau = k as f64 / sr;
                    let rate = (end_hz - start_hz) / period_s;
                    let phase = 2.0 * PI * (start_hz * tau + 0.5 * rate * tau * tau);
                    let fade = 0.5 - 0.5 * (2.0 * PI * k as f64 / period as f64).cos();
                    phase.sin() * fade
                })
                .collect()
        }
        ClassPrimitive::BandNoise { center_hz, q } => band_noise(rng, n, center_hz, q, sr),
    }
}

fn place_events(rng: &mut KeyedRng, cfg: &SynthConfig) -> Vec<(usize, f64, f64)> {
    let n_events = rng.gen_range(cfg.events_per_clip.0..=cfg.events_per_clip.1);
    let mut placed: Vec<(usize, f64, f64)> = Vec::with_capacity(n_events);
    for _ in 0..n_events {
        let class = rng.gen_range(0..cfg.n_classes);
        for _attempt in 0..20 {
            let dur = rng.gen_range(cfg.event_duration_s.0..=cfg.event_duration_s.1).min(cfg.clip_len_s);
            let onset = rng.gen_range(0.0..=(cfg.clip_len_s - dur));
            let clash = placed.iter().any(|&(c, on, off)| {
                c == class && onset < off + cfg.same_class_gap_s && on < onset + dur + cfg.same_class_gap_s
            });
            if !clash {
                placed.push((class, onset, onset + dur));
                break;
            }
        }
    }
    placed
}

/// Renders one strongly-labelled clip: pink background plus 1-3 class events.
pub fn synth_clip(rng: &mut KeyedRng, cfg: &SynthConfig, id: String) -> Result<LabeledClip> {
    if cfg.n_classes > 10 {
        return Err(DatasetError::TooManyClasses(cfg.n_classes));
    }
    let sr = cfg.sample_rate as f64;
    let n = cfg.clip_samples();
    let mut mix = pink_noise(rng, n);
    let bg_gain = db_to_amp(cfg.background_dbfs) / rms(&mix).max(1e-12);
    mix.iter_mut().for_each(|v| *v *= bg_gain);

    let table = class_table(cfg.n_classes);
    let mut events = EventList::new(cfg.n_classes);
    for (class, onset, offset) in place_events(rng, cfg) {
        let start = (onset * sr).round() as usize;
        let end = ((offset * sr).round() as usize).min(n);
        let len = end - start;
        let mut sig = render(table[class], rng, len, sr);
        let level = rng.gen_range(cfg.event_dbfs.0..=cfg.event_dbfs.1);
        let gain = db_to_amp(level) / rms(&sig).max(1e-12);
        let fade = ((0.02 * sr) as usize).min(len / 2).max(1);
        for (i, s) in sig.iter_mut().enumerate() {
            let edge = i.min(len - 1 - i);
            let env = if edge < fade { 0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / fade as f64).cos() } else { 1.0 };
            *s *= gain * env;
        }
        for (m, s) in mix[start..end].iter_mut().zip(&sig) {
            *m += s;
        }
        events.push(class, onset, offset);
    }
    events.sort();
    let waveform = Waveform::from_f64(&mix, cfg.sample_rate);
    Ok(LabeledClip::strong(id, waveform, events, cfg.grid_frames, cfg.grid_hop_s))
}

/// Clip counts per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSizes {
    pub train_strong: usize,
    pub train_weak: usize,
    pub train_unlabeled: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for CorpusSizes {
    fn default() -> Self {
        Self { train_strong: 200, train_weak: 200, train_unlabeled: 600, validation: 100, test: 200 }
    }
}

/// Generates every split; each clip draws from its own keyed stream.
pub fn synth_dataset(seed: u64, sizes: CorpusSizes, cfg: &SynthConfig) -> Result<Dataset> {
    let make = |split: u64, prefix: &str, count: usize| -> Result<Vec<LabeledClip>> {
        (0..count)
            .map(|i| {
                let mut rng = keyed(&[seed, domain::SYNTH, split, i as u64]);
                synth_clip(&mut rng, cfg, format!("{prefix}_{i:05}"))
            })
            .collect()
    };
    let weaken = |v: Vec<LabeledClip>| v.iter().map(LabeledClip::weaken).collect::<Result<Vec<_>>>();
    let strip = |v: Vec<LabeledClip>| v.iter().map(LabeledClip::strip).collect::<Result<Vec<_>>>();
    Ok(Dataset {
        meta: DatasetMeta {
            n_classes: cfg.n_classes,
            sample_rate: cfg.sample_rate,
            clip_len_s: cfg.clip_len_s,
            grid_frames: cfg.grid_frames,
            grid_hop_s: cfg.grid_hop_s,
            seed: Some(seed),
            format: AudioFormat::Ssf0,
        },
        train_strong: make(0, "strong", sizes.train_strong)?,
        train_weak: weaken(make(1, "weak", sizes.train_weak)?)?,
        train_unlabeled: strip(make(2, "unlabeled", sizes.train_unlabeled)?)?,
        validation: make(3, "validation", sizes.validation)?,
        test: make(4, "test", sizes.test)?,
    })
}
