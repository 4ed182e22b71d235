//! Objective metrics: Mel-cepstral distortion, word error rate, the FLOPS
//! accounting and side-input sizes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{dtw_frames, euclidean, mel_spectrogram, mfcc, MelSpectrogram, MfccMatrix, SpectralConfig, Waveform};
use crate::synth::MixtureRecord;
use crate::wav;

/// `10 / ln 10 * sqrt(2)`: dB per unit of Euclidean cepstral distance.
pub fn mcd_scale() -> f64 {
    10.0 / std::f64::consts::LN_10 * std::f64::consts::SQRT_2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McdReport {
    /// Sum over the aligned path.
    pub total_db: f64,
    /// `total_db` divided by the path length.
    pub per_frame_db: f64,
    pub aligned_frames: usize,
}

/// MCD between two cepstral sequences after DTW alignment.
pub fn mcd_from_mfcc(enhanced: &MfccMatrix, target: &MfccMatrix) -> Result<McdReport> {
    let alignment = dtw_frames(enhanced.values(), target.values())?;
    let total_db: f64 = alignment
        .path
        .iter()
        .map(|&(i, j)| {
            mcd_scale() * euclidean(enhanced.values().row(i), target.values().row(j))
        })
        .sum();
    let aligned_frames = alignment.path.len();
    Ok(McdReport { total_db, per_frame_db: total_db / aligned_frames as f64, aligned_frames })
}

pub fn mcd_mel(enhanced: &MelSpectrogram, target: &MelSpectrogram) -> Result<McdReport> {
    if enhanced.frames() == 0 || target.frames() == 0 {
        return Err(Error::EmptyInput("MCD input"));
    }
    let a = mfcc(enhanced, enhanced.config())?;
    let b = mfcc(target, target.config())?;
    mcd_from_mfcc(&a, &b)
}

pub fn mcd_waveform(enhanced: &Waveform, target: &Waveform, cfg: &SpectralConfig) -> Result<McdReport> {
    if enhanced.is_empty() || target.is_empty() {
        return Err(Error::EmptyInput("MCD input"));
    }
    mcd_mel(&mel_spectrogram(enhanced, cfg)?, &mel_spectrogram(target, cfg)?)
}

/// Word-level Levenshtein distance.
pub fn edit_distance<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> usize {
    let m = hypothesis.len();
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0; m + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r.as_ref() != h.as_ref());
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// `(S + D + I) / N` over word tokens.
pub fn wer<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyInput("WER reference"));
    }
    Ok(edit_distance(reference, hypothesis) as f64 / reference.len() as f64)
}

pub fn wer_text(reference: &str, hypothesis: &str) -> Result<f64> {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let h: Vec<&str> = hypothesis.split_whitespace().collect();
    wer(&r, &h)
}

/// Enhancement systems compared in the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// The unprocessed microphone signal.
    Mixture,
    Nlms,
    Vanilla,
    AecSeq2seq,
    Tec,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Mixture => "mixture",
            Method::Nlms => "nlms",
            Method::Vanilla => "vanilla",
            Method::AecSeq2seq => "aec_seq2seq",
            Method::Tec => "tec",
        }
    }
}

/// Bytes that must reach the enhancer besides the microphone signal.
pub fn side_input_size(record: &MixtureRecord, method: Method, manifest_dir: &Path) -> Result<u64> {
    if record.text.trim().is_empty() || record.phonemes.is_empty() {
        return Err(Error::Malformed(format!("record {} has an empty source text", record.id)));
    }
    match method {
        Method::Mixture | Method::Vanilla => Ok(0),
        Method::Tec => Ok(record.phoneme_sequence()?.to_bytes().len() as u64),
        Method::Nlms | Method::AecSeq2seq => wav::wav_payload_bytes(manifest_dir.join(&record.playback_path)),
    }
}

/// Inference cost estimate:
/// `m_audio * t_x + m_text * t_y + m_dec * t_z + flops_atten`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsReport {
    pub m_audio: u64,
    pub m_text: u64,
    pub m_dec: u64,
    pub t_x: u64,
    pub t_y: u64,
    pub t_z: u64,
    pub flops_atten: u64,
    pub total: u64,
}

impl FlopsReport {
    pub fn new(m_audio: u64, m_text: u64, m_dec: u64, t_x: u64, t_y: u64, t_z: u64, flops_atten: u64) -> Self {
        let total = m_audio * t_x + m_text * t_y + m_dec * t_z + flops_atten;
        Self { m_audio, m_text, m_dec, t_x, t_y, t_z, flops_atten, total }
    }

    pub fn is_consistent(&self) -> bool {
        self.total == self.m_audio * self.t_x + self.m_text * self.t_y + self.m_dec * self.t_z + self.flops_atten
    }
}
