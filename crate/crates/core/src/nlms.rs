//! Time-domain NLMS echo canceller.
//!
//! The playback (far-end reference) drives an adaptive FIR estimate of the
//! echo path; the estimate is subtracted from the microphone signal and the
//! residual is the enhanced output.
//!
//! ```text
//! y_hat = w^T u
//! e     = mic - y_hat
//! w    += mu * e * u / (u^T u + eps)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Waveform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlmsConfig {
    pub filter_taps: usize,
    pub step_size_mu: f64,
    pub regularizer_eps: f64,
}

impl Default for NlmsConfig {
    fn default() -> Self {
        Self { filter_taps: 1024, step_size_mu: 0.5, regularizer_eps: 1e-6 }
    }
}

impl NlmsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filter_taps == 0 {
            return Err(Error::InvalidConfig("filter_taps must be at least 1".into()));
        }
        if !(self.step_size_mu > 0.0 && self.step_size_mu < 2.0) {
            return Err(Error::InvalidConfig("step_size_mu must lie in (0, 2)".into()));
        }
        if !(self.regularizer_eps > 0.0) {
            return Err(Error::InvalidConfig("regularizer_eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveFilterState {
    pub weights: Vec<f64>,
    /// Most recent reference sample first.
    pub reference_buffer: Vec<f64>,
    steps: usize,
}

impl AdaptiveFilterState {
    pub fn new(taps: usize) -> Self {
        Self { weights: vec![0.0; taps], reference_buffer: vec![0.0; taps], steps: 0 }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One adaptation step. Returns the echo-cancelled sample.
    ///
    /// Does not validate `cfg`, so degenerate settings such as `eps = 0`
    /// can be exercised directly.
    pub fn step(&mut self, mic: f64, reference: f64, cfg: &NlmsConfig) -> Result<f64> {
        let buf = &mut self.reference_buffer;
        let n = buf.len();
        buf.copy_within(..n - 1, 1);
        buf[0] = reference;
        let (estimate, power) = self
            .weights
            .iter()
            .zip(buf.iter())
            .fold((0.0, 0.0), |(est, pow), (w, u)| (est + w * u, pow + u * u));
        let err = mic - estimate;
        let denom = power + cfg.regularizer_eps;
        if denom > 0.0 {
            let k = cfg.step_size_mu * err / denom;
            for (w, u) in self.weights.iter_mut().zip(buf.iter()) {
                *w += k * u;
            }
        }
        let step = self.steps;
        self.steps += 1;
        if !err.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { step });
        }
        Ok(err)
    }
}

/// Functional form of [`AdaptiveFilterState::step`].
pub fn nlms_step(
    mut state: AdaptiveFilterState,
    mic: f64,
    reference: f64,
    cfg: &NlmsConfig,
) -> Result<(f64, AdaptiveFilterState)> {
    let e = state.step(mic, reference, cfg)?;
    Ok((e, state))
}

/// Runs the canceller over whole signals. Inputs must already be padded to
/// equal length.
pub fn nlms_cancel(mixture: &Waveform, playback: &Waveform, cfg: &NlmsConfig) -> Result<Waveform> {
    cfg.validate()?;
    if mixture.sample_rate() != playback.sample_rate() {
        return Err(Error::SampleRateMismatch { left: mixture.sample_rate(), right: playback.sample_rate() });
    }
    if mixture.len() != playback.len() {
        return Err(Error::Shape(format!(
            "mixture has {} samples, playback {}; pad first",
            mixture.len(),
            playback.len()
        )));
    }
    let mut state = AdaptiveFilterState::new(cfg.filter_taps);
    let out = mixture
        .samples()
        .iter()
        .zip(playback.samples())
        .map(|(&m, &r)| state.step(m, r, cfg))
        .collect::<Result<Vec<_>>>()?;
    Waveform::new(out, mixture.sample_rate())
}

/// Echo return loss enhancement in dB: echo energy at the microphone over
/// the residual energy.
pub fn erle_db(echo: &[f64], residual: &[f64]) -> f64 {
    let e: f64 = echo.iter().map(|v| v * v).sum();
    let r: f64 = residual.iter().map(|v| v * v).sum();
    10.0 * (e / r).log10()
}
