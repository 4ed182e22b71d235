//! 16-bit PCM mono WAV ingestion and output.

use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::Waveform;

const SCALE: f64 = 32768.0;

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedWav(format!(
            "{} channel(s), {}-bit {:?}; expected 16-bit PCM mono",
            spec.channels, spec.bits_per_sample, spec.sample_format
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Waveform::new(samples, spec.sample_rate)
}

/// Quantizes to 16 bits, saturating at the integer range.
pub fn quantize(sample: f64) -> i16 {
    (sample * SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in w.samples() {
        writer.write_sample(quantize(s))?;
    }
    writer.finalize()?;
    Ok(())
}

/// Size in bytes of the PCM payload (no header) of a 16-bit mono file.
pub fn wav_payload_bytes(path: impl AsRef<Path>) -> Result<u64> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    Ok(reader.duration() as u64 * spec.channels as u64 * (spec.bits_per_sample as u64 / 8))
}
