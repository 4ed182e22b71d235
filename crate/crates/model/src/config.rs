//! Model hyperparameters. [`ModelConfig::default`] is the full-size network;
//! [`ModelConfig::toy`] and [`ModelConfig::micro`] are the scaled-down
//! variants used for desk-scale training and gradient checks.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which encoders feed the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Mixture audio plus the playback's source text.
    #[default]
    Tec,
    /// Mixture audio only, single attention.
    Vanilla,
    /// Mixture audio plus the playback waveform's spectrogram.
    AecSeq2seq,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Tec, Mode::Vanilla, Mode::AecSeq2seq];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Tec => "tec",
            Mode::Vanilla => "vanilla",
            Mode::AecSeq2seq => "aec_seq2seq",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tec" => Ok(Mode::Tec),
            "vanilla" => Ok(Mode::Vanilla),
            "aec" | "aec_seq2seq" | "aec-seq2seq" => Ok(Mode::AecSeq2seq),
            other => Err(Error::Config(format!("unknown mode {other:?} (expected tec, vanilla or aec)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AudioEncoderConfig {
    /// Kernels in each of the two 3x3, stride-2 convolutions.
    pub conv_channels: usize,
    pub clstm_units: usize,
    /// Frequency extent of the convolutional LSTM kernel.
    pub clstm_kernel: usize,
    pub bilstm_layers: usize,
    pub bilstm_units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextEncoderConfig {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub conv_layers: usize,
    pub conv_channels: usize,
    pub conv_kernel: usize,
    pub bilstm_units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    /// Mel bands of both input and output spectrograms.
    pub mel_dim: usize,
    pub prenet_layers: usize,
    pub prenet_units: usize,
    pub lstm_layers: usize,
    pub lstm_units: usize,
    pub postnet_layers: usize,
    pub postnet_channels: usize,
    pub postnet_kernel: usize,
    /// Drop probability after each pre-net layer while training.
    #[serde(default)]
    pub prenet_dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionConfig {
    pub context_dim: usize,
    pub components: usize,
    /// Added to the softplus width so it stays strictly positive.
    pub min_width: f64,
    /// Initial mean advance per step, in encoder positions, for audio sources.
    pub audio_step_init: f64,
    pub text_step_init: f64,
    pub width_init: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: Mode,
    pub audio_enc: AudioEncoderConfig,
    pub text_enc: TextEncoderConfig,
    pub decoder: DecoderConfig,
    pub attention: AttentionConfig,
    /// Weight of the "stop" class in the stop-token cross-entropy.
    pub stop_pos_weight: f64,
    pub stop_threshold: f64,
    /// Inference stops after this many steps per encoded audio frame.
    pub max_steps_per_frame: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Tec,
            audio_enc: AudioEncoderConfig {
                conv_channels: 32,
                clstm_units: 256,
                clstm_kernel: 3,
                bilstm_layers: 3,
                bilstm_units: 256,
            },
            text_enc: TextEncoderConfig {
                vocab_size: tec_core::phonemes::vocab_size(),
                embedding_dim: 512,
                conv_layers: 3,
                conv_channels: 512,
                conv_kernel: 5,
                bilstm_units: 256,
            },
            decoder: DecoderConfig {
                mel_dim: 128,
                prenet_layers: 2,
                prenet_units: 256,
                lstm_layers: 2,
                lstm_units: 256,
                postnet_layers: 5,
                postnet_channels: 512,
                postnet_kernel: 5,
                prenet_dropout: 0.0,
            },
            attention: AttentionConfig {
                context_dim: 128,
                components: 5,
                min_width: 1e-4,
                audio_step_init: 0.25,
                text_step_init: 0.1,
                width_init: 1.0,
            },
            stop_pos_weight: 5.0,
            stop_threshold: 0.5,
            max_steps_per_frame: 4,
        }
    }
}

impl ModelConfig {
    /// Every width divided by 16, two mixture components.
    pub fn toy() -> Self {
        let mut c = Self::default();
        let a = &mut c.audio_enc;
        a.conv_channels /= 16;
        a.clstm_units /= 16;
        a.bilstm_units /= 16;
        let t = &mut c.text_enc;
        t.embedding_dim /= 16;
        t.conv_channels /= 16;
        t.bilstm_units /= 16;
        let d = &mut c.decoder;
        d.mel_dim /= 16;
        d.prenet_units /= 16;
        d.lstm_units /= 16;
        d.postnet_channels /= 16;
        c.attention.context_dim /= 16;
        c.attention.components = 2;
        c
    }

    /// Smallest configuration exercising every layer, for finite-difference checks.
    pub fn micro() -> Self {
        let mut c = Self::toy();
        c.audio_enc.clstm_units = 4;
        c.audio_enc.bilstm_units = 4;
        c.text_enc.embedding_dim = 8;
        c.text_enc.conv_channels = 8;
        c.text_enc.bilstm_units = 4;
        c.decoder.prenet_units = 8;
        c.decoder.lstm_units = 8;
        c.decoder.postnet_channels = 8;
        c
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_mel_dim(mut self, mel_dim: usize) -> Self {
        self.decoder.mel_dim = mel_dim;
        self
    }

    /// Width of every encoder's output sequence.
    pub fn encoder_dim(&self) -> usize {
        2 * self.audio_enc.bilstm_units
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let positive = [
            ("audio_enc.conv_channels", self.audio_enc.conv_channels),
            ("audio_enc.clstm_units", self.audio_enc.clstm_units),
            ("audio_enc.clstm_kernel", self.audio_enc.clstm_kernel),
            ("audio_enc.bilstm_layers", self.audio_enc.bilstm_layers),
            ("audio_enc.bilstm_units", self.audio_enc.bilstm_units),
            ("text_enc.vocab_size", self.text_enc.vocab_size),
            ("text_enc.embedding_dim", self.text_enc.embedding_dim),
            ("text_enc.conv_channels", self.text_enc.conv_channels),
            ("text_enc.conv_kernel", self.text_enc.conv_kernel),
            ("text_enc.bilstm_units", self.text_enc.bilstm_units),
            ("decoder.mel_dim", self.decoder.mel_dim),
            ("decoder.prenet_layers", self.decoder.prenet_layers),
            ("decoder.prenet_units", self.decoder.prenet_units),
            ("decoder.lstm_layers", self.decoder.lstm_layers),
            ("decoder.lstm_units", self.decoder.lstm_units),
            ("decoder.postnet_kernel", self.decoder.postnet_kernel),
            ("attention.context_dim", self.attention.context_dim),
            ("attention.components", self.attention.components),
            ("max_steps_per_frame", self.max_steps_per_frame),
        ];
        for (name, v) in positive {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.decoder.postnet_layers > 0 && self.decoder.postnet_layers < 2 {
            return bad("decoder.postnet_layers must be 0 or at least 2".into());
        }
        if self.decoder.postnet_layers > 0 && self.decoder.postnet_channels == 0 {
            return bad("decoder.postnet_channels must be positive".into());
        }
        if self.text_enc.bilstm_units != self.audio_enc.bilstm_units {
            return bad(format!(
                "encoder output widths differ: audio {} vs text {}",
                2 * self.audio_enc.bilstm_units,
                2 * self.text_enc.bilstm_units
            ));
        }
        if !(0.0..1.0).contains(&self.decoder.prenet_dropout) {
            return bad("decoder.prenet_dropout must be in [0, 1)".into());
        }
        let a = &self.attention;
        if !(a.min_width > 0.0) || !(a.audio_step_init > 0.0) || !(a.text_step_init > 0.0) || !(a.width_init > a.min_width) {
            return bad("attention init values must be positive and width_init > min_width".into());
        }
        if !(self.stop_pos_weight > 0.0) || !(self.stop_threshold > 0.0 && self.stop_threshold < 1.0) {
            return bad("stop_pos_weight must be positive and stop_threshold in (0, 1)".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}
