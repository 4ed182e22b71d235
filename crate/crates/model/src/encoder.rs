//! Audio and text encoders. Both process a batch layer by layer so batch
//! normalization can pool statistics over every sequence in the batch.

use tec_grad::nn::{BatchNorm, BiConvLstm, BiLstm, Conv1d, Conv2d, Embedding};
use tec_grad::{Graph, ParamSpec, Var};

use crate::config::{AudioEncoderConfig, TextEncoderConfig};
use crate::error::{Error, Result};

/// Frames an audio input needs to survive two stride-2 convolutions.
pub const MIN_AUDIO_FRAMES: usize = 4;

/// Length of the encoded sequence for `t_x` input frames.
pub fn encoded_audio_len(t_x: usize) -> usize {
    t_x.div_ceil(2).div_ceil(2)
}

fn relu_bn(g: &mut Graph, bn: &BatchNorm, xs: Vec<Var>) -> Result<Vec<Var>> {
    let xs: Vec<Var> = xs.into_iter().map(|x| g.relu(x)).collect::<tec_grad::Result<_>>()?;
    Ok(bn.forward_batch(g, &xs)?)
}

/// Two 3x3 stride-2 convolutions, a bidirectional convolutional LSTM over
/// frequency, then stacked Bi-LSTMs; every layer followed by ReLU and batch
/// norm. Input `[T, mel_dim]`, output `[ceil(T/4), 2 * bilstm_units]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioEncoder {
    pub name: String,
    pub mel_dim: usize,
    convs: Vec<(Conv2d, BatchNorm)>,
    clstm: BiConvLstm,
    clstm_bn: BatchNorm,
    lstms: Vec<(BiLstm, BatchNorm)>,
}

impl AudioEncoder {
    pub fn new(name: &str, cfg: &AudioEncoderConfig, mel_dim: usize) -> Self {
        let ch = cfg.conv_channels;
        let convs = (0..2)
            .map(|i| {
                let cin = if i == 0 { 1 } else { ch };
                (
                    Conv2d::new(format!("{name}/conv{i}"), cin, ch, (3, 3), (2, 2)),
                    BatchNorm::new(format!("{name}/conv{i}_bn"), ch),
                )
            })
            .collect();
        let freq = encoded_audio_len(mel_dim);
        let clstm = BiConvLstm::new(&format!("{name}/clstm"), ch, cfg.clstm_units, cfg.clstm_kernel);
        let clstm_dim = clstm.output_dim(freq);
        let clstm_bn = BatchNorm::new(format!("{name}/clstm_bn"), clstm_dim);
        let lstms = (0..cfg.bilstm_layers)
            .map(|i| {
                let input = if i == 0 { clstm_dim } else { 2 * cfg.bilstm_units };
                (
                    BiLstm::new(&format!("{name}/bilstm{i}"), input, cfg.bilstm_units),
                    BatchNorm::new(format!("{name}/bilstm{i}_bn"), 2 * cfg.bilstm_units),
                )
            })
            .collect();
        Self { name: name.to_string(), mel_dim, convs, clstm, clstm_bn, lstms }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v = Vec::new();
        for (c, bn) in &self.convs {
            v.extend(c.specs());
            v.extend(bn.specs());
        }
        v.extend(self.clstm.specs());
        v.extend(self.clstm_bn.specs());
        for (l, bn) in &self.lstms {
            v.extend(l.specs());
            v.extend(bn.specs());
        }
        v
    }

    pub fn output_dim(&self) -> usize {
        self.lstms.last().map_or(self.clstm_bn.features, |(l, _)| l.output_dim())
    }

    /// Encodes each `[T_i, mel_dim]` input.
    pub fn forward(&self, g: &mut Graph, xs: &[Var]) -> Result<Vec<Var>> {
        if xs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut hs = Vec::with_capacity(xs.len());
        for &x in xs {
            let (t, f) = g.value(x).dims2();
            if f != self.mel_dim {
                return Err(Error::Mismatch { what: "audio encoder mel bands", expected: self.mel_dim, got: f });
            }
            if t < MIN_AUDIO_FRAMES {
                return Err(Error::InputTooShort { what: "audio encoder", min: MIN_AUDIO_FRAMES, got: t });
            }
            hs.push(g.reshape(x, vec![t, f, 1])?);
        }
        for (conv, bn) in &self.convs {
            let ys = hs.iter().map(|&h| conv.forward(g, h)).collect::<tec_grad::Result<Vec<_>>>()?;
            hs = relu_bn(g, bn, ys)?;
        }
        let ys = hs.iter().map(|&h| self.clstm.run(g, h)).collect::<tec_grad::Result<Vec<_>>>()?;
        hs = relu_bn(g, &self.clstm_bn, ys)?;
        for (lstm, bn) in &self.lstms {
            let ys = hs.iter().map(|&h| lstm.run(g, h)).collect::<tec_grad::Result<Vec<_>>>()?;
            hs = relu_bn(g, bn, ys)?;
        }
        Ok(hs)
    }
}

/// Phoneme embedding, a stack of length-preserving 1-D convolutions and one
/// Bi-LSTM, each followed by ReLU and batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    pub name: String,
    embedding: Embedding,
    convs: Vec<(Conv1d, BatchNorm)>,
    lstm: BiLstm,
    lstm_bn: BatchNorm,
}

impl TextEncoder {
    pub fn new(name: &str, cfg: &TextEncoderConfig) -> Self {
        let embedding = Embedding::new(format!("{name}/embedding"), cfg.vocab_size, cfg.embedding_dim);
        let convs = (0..cfg.conv_layers)
            .map(|i| {
                let cin = if i == 0 { cfg.embedding_dim } else { cfg.conv_channels };
                (
                    Conv1d::new(format!("{name}/conv{i}"), cin, cfg.conv_channels, cfg.conv_kernel),
                    BatchNorm::new(format!("{name}/conv{i}_bn"), cfg.conv_channels),
                )
            })
            .collect();
        let lstm_in = if cfg.conv_layers == 0 { cfg.embedding_dim } else { cfg.conv_channels };
        let lstm = BiLstm::new(&format!("{name}/bilstm"), lstm_in, cfg.bilstm_units);
        let lstm_bn = BatchNorm::new(format!("{name}/bilstm_bn"), 2 * cfg.bilstm_units);
        Self { name: name.to_string(), embedding, convs, lstm, lstm_bn }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v = self.embedding.specs();
        for (c, bn) in &self.convs {
            v.extend(c.specs());
            v.extend(bn.specs());
        }
        v.extend(self.lstm.specs());
        v.extend(self.lstm_bn.specs());
        v
    }

    pub fn output_dim(&self) -> usize {
        self.lstm.output_dim()
    }

    /// Encodes each token sequence to `[T_y, 2 * bilstm_units]`.
    pub fn forward(&self, g: &mut Graph, ids: &[&[usize]]) -> Result<Vec<Var>> {
        if ids.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut hs = Vec::with_capacity(ids.len());
        for seq in ids {
            if seq.is_empty() {
                return Err(Error::InputTooShort { what: "text encoder", min: 1, got: 0 });
            }
            if let Some(&id) = seq.iter().find(|&&id| id >= self.embedding.vocab) {
                return Err(Error::UnknownToken { id, vocab: self.embedding.vocab });
            }
            hs.push(self.embedding.forward(g, seq)?);
        }
        for (conv, bn) in &self.convs {
            let ys = hs.iter().map(|&h| conv.forward(g, h)).collect::<tec_grad::Result<Vec<_>>>()?;
            hs = relu_bn(g, bn, ys)?;
        }
        let ys = hs.iter().map(|&h| self.lstm.run(g, h)).collect::<tec_grad::Result<Vec<_>>>()?;
        relu_bn(g, &self.lstm_bn, ys)
    }
}
