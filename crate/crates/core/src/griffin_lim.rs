//! Griffin-Lim phase reconstruction from a log-Mel spectrogram, for
//! listening checks only.

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::{hann, MelFilterbank, MelSpectrogram, Waveform};
use crate::synth::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GriffinLimConfig {
    pub iterations: usize,
    pub seed: u64,
}

impl Default for GriffinLimConfig {
    fn default() -> Self {
        Self { iterations: 32, seed: 0 }
    }
}

/// Approximate linear magnitudes: each FFT bin takes the weighted average of
/// the per-bin energy densities of the Mel filters covering it.
fn mel_to_magnitudes(mel: &MelSpectrogram, bank: &MelFilterbank) -> Vec<Vec<f64>> {
    let w = bank.weights();
    let n_bins = w.cols();
    let area: Vec<f64> = w.iter_rows().map(|r| r.iter().sum()).collect();
    let mut coverage = vec![0.0; n_bins];
    for row in w.iter_rows() {
        for (c, v) in coverage.iter_mut().zip(row) {
            *c += v;
        }
    }
    mel.values()
        .iter_rows()
        .map(|frame| {
            let mut mag = vec![0.0; n_bins];
            for ((row, e), a) in w.iter_rows().zip(frame).zip(&area) {
                if *a <= 0.0 {
                    continue;
                }
                let density = e.exp() / a;
                for (m, v) in mag.iter_mut().zip(row) {
                    *m += v * density;
                }
            }
            mag.iter().zip(&coverage).map(|(m, c)| if *c > 0.0 { m / c } else { 0.0 }).collect()
        })
        .collect()
}

pub fn griffin_lim(mel: &MelSpectrogram, cfg: &GriffinLimConfig) -> Result<Waveform> {
    let spec = mel.config();
    let bank = MelFilterbank::new(spec)?;
    if mel.frames() == 0 {
        return Err(Error::EmptyInput("Griffin-Lim input"));
    }
    let target = mel_to_magnitudes(mel, &bank);
    let len = spec.frame_length_samples();
    let shift = spec.frame_shift_samples();
    let n_fft = spec.fft_len();
    let n_bins = n_fft / 2 + 1;
    let frames = target.len();
    let out_len = (frames - 1) * shift + len;
    let window = hann(len);

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n_fft);
    let inv = planner.plan_fft_inverse(n_fft);

    let mut norm = vec![0.0; out_len];
    for t in 0..frames {
        for (i, h) in window.iter().enumerate() {
            norm[t * shift + i] += h * h;
        }
    }
    // Clamp the overlap-add normalizer so the sparsely covered edges are not
    // blown up.
    let norm_floor = 0.1 * norm.iter().cloned().fold(0.0, f64::max);
    norm.iter_mut().for_each(|n| *n = n.max(norm_floor));

    let mut rng = seeded_rng(cfg.seed, "griffin_lim");
    let mut phase: Vec<Vec<Complex<f64>>> = (0..frames)
        .map(|_| (0..n_bins).map(|_| Complex::from_polar(1.0, rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))).collect())
        .collect();
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut signal = vec![0.0; out_len];

    for iter in 0..=cfg.iterations {
        signal.iter_mut().for_each(|s| *s = 0.0);
        for t in 0..frames {
            for k in 0..n_bins {
                buf[k] = phase[t][k] * target[t][k];
            }
            for k in n_bins..n_fft {
                buf[k] = buf[n_fft - k].conj();
            }
            inv.process(&mut buf);
            for (i, h) in window.iter().enumerate() {
                signal[t * shift + i] += buf[i].re / n_fft as f64 * h;
            }
        }
        for (s, n) in signal.iter_mut().zip(&norm) {
            *s /= n;
        }
        if iter == cfg.iterations {
            break;
        }
        for t in 0..frames {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (i, h) in window.iter().enumerate() {
                buf[i].re = signal[t * shift + i] * h;
            }
            fwd.process(&mut buf);
            for k in 0..n_bins {
                let n = buf[k].norm();
                phase[t][k] = if n > 0.0 { buf[k] / n } else { Complex::new(1.0, 0.0) };
            }
        }
    }
    let w = Waveform::new(signal, spec.sample_rate_hz)?;
    Ok(w.peak_normalized().0)
}
