use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Result, SignalError, Waveform};

const SSF0_MAGIC: &[u8; 4] = b"SSF0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AudioFormat {
    /// 16-bit PCM mono WAV.
    Wav,
    /// Raw little-endian f32 with an 8-byte header: `SSF0` + u32 sample rate.
    Ssf0,
}

impl AudioFormat {
    pub fn extension(self) -> &'static str {
        match self {
            AudioFormat::Wav => "wav",
            AudioFormat::Ssf0 => "ssf",
        }
    }
}

pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &w.samples {
        writer.write_sample((s.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16)?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(SignalError::BadFormat(format!(
            "{}: expected 16-bit PCM mono, found {} channel(s) at {} bits",
            path.display(),
            spec.channels,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f32 / i16::MAX as f32))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Waveform::new(samples, spec.sample_rate)
}

pub fn write_ssf0(path: &Path, w: &Waveform) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(SSF0_MAGIC)?;
    out.write_all(&w.sample_rate.to_le_bytes())?;
    for s in &w.samples {
        out.write_all(&s.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_ssf0(path: &Path) -> Result<Waveform> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != SSF0_MAGIC {
        return Err(SignalError::BadFormat(format!("{}: missing SSF0 header", path.display())));
    }
    let body = &bytes[8..];
    if body.len() % 4 != 0 {
        return Err(SignalError::BadFormat(format!("{}: truncated sample data", path.display())));
    }
    let sample_rate = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let samples = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Waveform::new(samples, sample_rate)
}

pub fn write_audio(path: &Path, w: &Waveform, format: AudioFormat) -> Result<()> {
    match format {
        AudioFormat::Wav => write_wav(path, w),
        AudioFormat::Ssf0 => write_ssf0(path, w),
    }
}

/// Reads either format, chosen by file extension.
pub fn read_audio(path: &Path) -> Result<Waveform> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("wav") => read_wav(path),
        Some("ssf") => read_ssf0(path),
        _ => Err(SignalError::BadFormat(format!("{}: unknown audio extension", path.display()))),
    }
}
