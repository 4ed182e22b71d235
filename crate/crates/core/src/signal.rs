//! Deterministic DSP primitives: framing, log-Mel analysis, MFCCs,
//! linear convolution and DTW alignment.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono time-domain audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Malformed(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Scales the signal down so that no sample exceeds unit magnitude.
    /// Returns the applied factor (1.0 when the signal already fits).
    pub fn peak_normalized(&self) -> (Waveform, f64) {
        let peak = self.peak();
        if peak > 1.0 {
            let g = 1.0 / peak;
            (self.scaled(g), g)
        } else {
            (self.clone(), 1.0)
        }
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Waveform {
        Waveform { samples, sample_rate: self.sample_rate }
    }
}

/// Linear-interpolation resampler used when ingesting audio at a foreign rate.
pub fn resample_linear(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidConfig("target sample rate must be positive".into()));
    }
    if target_rate == w.sample_rate || w.is_empty() {
        return Ok(Waveform { samples: w.samples.clone(), sample_rate: target_rate });
    }
    let ratio = w.sample_rate as f64 / target_rate as f64;
    let out_len = ((w.len() as f64) / ratio).round().max(1.0) as usize;
    let last = w.len() - 1;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let k = (pos.floor() as usize).min(last);
            let frac = pos - k as f64;
            let next = (k + 1).min(last);
            w.samples[k] * (1.0 - frac) + w.samples[next] * frac
        })
        .collect();
    Ok(Waveform { samples, sample_rate: target_rate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MelNorm {
    /// Each triangle peaks at 1.
    #[default]
    Peak,
    /// Each triangle has unit area over the FFT bins.
    Area,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    pub sample_rate_hz: u32,
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    /// `None` means the next power of two at or above the frame length.
    pub fft_size: Option<usize>,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub log_floor: f64,
    pub mel_norm: MelNorm,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            frame_length_ms: 50.0,
            frame_shift_ms: 12.5,
            fft_size: None,
            n_mels: 128,
            n_mfcc: 13,
            fmin_hz: 0.0,
            fmax_hz: DEFAULT_SAMPLE_RATE as f64 / 2.0,
            log_floor: 1e-10,
            mel_norm: MelNorm::Peak,
        }
    }
}

impl SpectralConfig {
    pub fn with_n_mels(mut self, n_mels: usize) -> Self {
        self.n_mels = n_mels;
        self
    }

    pub fn frame_length_samples(&self) -> usize {
        (self.frame_length_ms * self.sample_rate_hz as f64 / 1000.0).round() as usize
    }

    pub fn frame_shift_samples(&self) -> usize {
        (self.frame_shift_ms * self.sample_rate_hz as f64 / 1000.0).round() as usize
    }

    pub fn fft_len(&self) -> usize {
        self.fft_size.unwrap_or_else(|| self.frame_length_samples().next_power_of_two())
    }

    pub fn log_floor_value(&self) -> f64 {
        self.log_floor.ln()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.sample_rate_hz == 0 {
            return bad("sample_rate_hz must be positive");
        }
        let len = self.frame_length_samples();
        let shift = self.frame_shift_samples();
        if len == 0 || shift == 0 {
            return bad("frame length and shift must cover at least one sample");
        }
        if self.frame_shift_ms > self.frame_length_ms {
            return bad("frame_shift_ms must not exceed frame_length_ms");
        }
        let fft = self.fft_len();
        if !fft.is_power_of_two() || fft < len {
            return bad("fft_size must be a power of two no smaller than the frame length");
        }
        if !(0.0 <= self.fmin_hz && self.fmin_hz < self.fmax_hz)
            || self.fmax_hz > self.sample_rate_hz as f64 / 2.0
        {
            return bad("require 0 <= fmin_hz < fmax_hz <= sample_rate_hz / 2");
        }
        if self.n_mels == 0 {
            return bad("n_mels must be positive");
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive");
        }
        Ok(())
    }
}

/// `T x n_mels` log-Mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    values: Matrix,
    config: SpectralConfig,
}

impl MelSpectrogram {
    /// Wraps externally produced log-Mel values (e.g. model predictions).
    /// Entries below the configured floor are clamped to it.
    pub fn from_matrix(values: Matrix, config: SpectralConfig) -> Result<Self> {
        if values.cols() != config.n_mels {
            return Err(Error::Shape(format!(
                "mel matrix has {} columns, config expects {}",
                values.cols(),
                config.n_mels
            )));
        }
        if values.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed("non-finite log-Mel entry".into()));
        }
        let floor = config.log_floor_value();
        Ok(Self { values: values.map(|v| v.max(floor)), config })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn config(&self) -> &SpectralConfig {
        &self.config
    }

    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    pub fn n_mels(&self) -> usize {
        self.values.cols()
    }
}

/// Cepstral coefficients 1..=n_mfcc (coefficient 0 dropped).
#[derive(Debug, Clone, PartialEq)]
pub struct MfccMatrix {
    values: Matrix,
}

impl MfccMatrix {
    pub fn new(values: Matrix) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn frames(&self) -> usize {
        self.values.rows()
    }
}

pub(crate) fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos()).collect()
}

/// Splits the waveform into Hann-windowed frames.
pub fn frame_signal(w: &Waveform, cfg: &SpectralConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let len = cfg.frame_length_samples();
    let shift = cfg.frame_shift_samples();
    if w.len() < len {
        return Err(Error::InputTooShort { needed: len, got: w.len() });
    }
    let window = hann(len);
    let count = (w.len() - len) / shift + 1;
    Ok((0..count)
        .map(|f| {
            let start = f * shift;
            w.samples[start..start + len].iter().zip(&window).map(|(s, h)| s * h).collect()
        })
        .collect())
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular Mel filterbank over the `fft_len / 2 + 1` magnitude bins.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Matrix,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &SpectralConfig) -> Result<Self> {
        cfg.validate()?;
        let n_fft = cfg.fft_len();
        let n_bins = n_fft / 2 + 1;
        let sr = cfg.sample_rate_hz as f64;
        let (mlo, mhi) = (hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz));
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let mut weights = Matrix::zeros(cfg.n_mels, n_bins);
        for m in 0..cfg.n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * sr / n_fft as f64;
                let w = if f > lo && f <= center {
                    (f - lo) / (center - lo)
                } else if f > center && f < hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                weights.set(m, k, w);
            }
            if cfg.mel_norm == MelNorm::Area {
                let area: f64 = weights.row(m).iter().sum();
                if area > 0.0 {
                    weights.row_mut(m).iter_mut().for_each(|w| *w /= area);
                }
            }
        }
        Ok(Self { weights, centers_hz: edges[1..=cfg.n_mels].to_vec() })
    }

    /// `n_mels x n_bins` weights.
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn apply(&self, magnitudes: &[f64]) -> Vec<f64> {
        self.weights
            .iter_rows()
            .map(|row| row.iter().zip(magnitudes).map(|(w, m)| w * m).sum())
            .collect()
    }
}

/// Magnitude spectra of the zero-padded frames, `fft_len / 2 + 1` bins each.
pub fn magnitude_spectra(frames: &[Vec<f64>], fft_len: usize) -> Vec<Vec<f64>> {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_len);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
    frames
        .iter()
        .map(|frame| {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (c, &s) in buf.iter_mut().zip(frame) {
                c.re = s;
            }
            fft.process(&mut buf);
            buf[..fft_len / 2 + 1].iter().map(|c| c.norm()).collect()
        })
        .collect()
}

pub fn mel_spectrogram(w: &Waveform, cfg: &SpectralConfig) -> Result<MelSpectrogram> {
    if w.sample_rate() != cfg.sample_rate_hz {
        return Err(Error::SampleRateMismatch { left: w.sample_rate(), right: cfg.sample_rate_hz });
    }
    let frames = frame_signal(w, cfg)?;
    let bank = MelFilterbank::new(cfg)?;
    let floor = cfg.log_floor;
    let mut values = Matrix::zeros(frames.len(), cfg.n_mels);
    for (t, mag) in magnitude_spectra(&frames, cfg.fft_len()).iter().enumerate() {
        for (dst, e) in values.row_mut(t).iter_mut().zip(bank.apply(mag)) {
            *dst = e.max(floor).ln();
        }
    }
    Ok(MelSpectrogram { values, config: cfg.clone() })
}

/// Orthonormal DCT-II basis rows for coefficients `1..=n_coeffs` over `n` inputs.
fn dct_basis(n: usize, n_coeffs: usize) -> Matrix {
    let mut basis = Matrix::zeros(n_coeffs, n);
    let scale = (2.0 / n as f64).sqrt();
    for k in 1..=n_coeffs {
        for m in 0..n {
            basis.set(k - 1, m, scale * (PI * k as f64 * (m as f64 + 0.5) / n as f64).cos());
        }
    }
    basis
}

pub fn mfcc(m: &MelSpectrogram, cfg: &SpectralConfig) -> Result<MfccMatrix> {
    mfcc_from_log_mel(m.values(), cfg.n_mfcc)
}

/// DCT-II over the Mel axis of every row, keeping coefficients `1..=n_mfcc`.
pub fn mfcc_from_log_mel(log_mel: &Matrix, n_mfcc: usize) -> Result<MfccMatrix> {
    let n = log_mel.cols();
    if n_mfcc >= n {
        return Err(Error::InvalidConfig(format!(
            "{n_mfcc} cepstral coefficients need more than {n} Mel bands"
        )));
    }
    let basis = dct_basis(n, n_mfcc);
    let mut out = Matrix::zeros(log_mel.rows(), n_mfcc);
    for (t, row) in log_mel.iter_rows().enumerate() {
        for (k, b) in basis.iter_rows().enumerate() {
            out.set(t, k, b.iter().zip(row).map(|(b, x)| b * x).sum());
        }
    }
    Ok(MfccMatrix { values: out })
}

const DIRECT_CONV_LIMIT: usize = 1 << 16;

/// Full linear convolution, `len(x) + len(h) - 1` outputs.
pub fn convolve(x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() || h.is_empty() {
        return Err(Error::EmptyInput("convolution operand"));
    }
    if x.len().min(h.len()) <= 32 || x.len() * h.len() <= DIRECT_CONV_LIMIT {
        Ok(convolve_direct(x, h))
    } else {
        Ok(convolve_fft(x, h))
    }
}

fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (o, &hj) in out[i..].iter_mut().zip(h) {
            *o += xi * hj;
        }
    }
    out
}

fn convolve_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd: Arc<dyn Fft<f64>> = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let lift = |s: &[f64]| {
        let mut v = vec![Complex::new(0.0, 0.0); n];
        v.iter_mut().zip(s).for_each(|(c, &r)| c.re = r);
        v
    };
    let (mut a, mut b) = (lift(x), lift(h));
    fwd.process(&mut a);
    fwd.process(&mut b);
    a.iter_mut().zip(&b).for_each(|(p, q)| *p *= q);
    inv.process(&mut a);
    a[..out_len].iter().map(|c| c.re / n as f64).collect()
}

/// Minimum-cost monotonic alignment between two frame sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct DtwAlignment {
    pub path: Vec<(usize, usize)>,
    /// Sum of Euclidean frame distances along the path.
    pub cost: f64,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn dtw_align(a: &MfccMatrix, b: &MfccMatrix) -> Result<DtwAlignment> {
    dtw_frames(a.values(), b.values())
}

/// DTW with the step set {(1,0), (0,1), (1,1)}. Ties prefer the diagonal.
pub fn dtw_frames(a: &Matrix, b: &Matrix) -> Result<DtwAlignment> {
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::EmptyInput("DTW sequence"));
    }
    if a.cols() != b.cols() {
        return Err(Error::Shape(format!("DTW frame widths {} vs {}", a.cols(), b.cols())));
    }
    let (n, m) = (a.rows(), b.rows());
    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let d = euclidean(a.row(i), b.row(j));
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::INFINITY };
                let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[i * m + j] = best + d;
        }
    }
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::INFINITY };
        let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
        let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();
    Ok(DtwAlignment { path, cost: acc[n * m - 1] })
}
