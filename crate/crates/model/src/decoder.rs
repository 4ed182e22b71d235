//! Autoregressive decoder and post-net.

use tec_grad::nn::{BatchNorm, Conv1d, Dense, Lstm, LstmState};
use tec_grad::{Graph, ParamSpec, Tensor, Var};

use crate::attention::{AttentionStep, GmmAttention, GmmState, Source};
use crate::config::DecoderConfig;
use crate::error::{Error, Result};

/// Everything carried from one decoder step to the next.
#[derive(Debug, Clone)]
pub struct DecoderState {
    /// Previous output frame `[1, mel_dim]`; the zero frame at the start.
    pub prev: Var,
    pub lstm: Vec<LstmState>,
    /// One entry per attention source, in model order.
    pub attention: Vec<GmmState>,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Pre-post-net frame `[1, mel_dim]`.
    pub frame: Var,
    /// `[1, 2]` stop-token logits; class 1 means "stop".
    pub stop_logits: Var,
    /// Summed context `[1, context_dim]`.
    pub context: Var,
    pub attention: Vec<AttentionStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub mel_dim: usize,
    prenet: Vec<Dense>,
    prenet_dropout: f64,
    lstms: Vec<Lstm>,
    mel_head: Dense,
    stop_head: Dense,
}

impl Decoder {
    pub fn new(name: &str, cfg: &DecoderConfig, context_dim: usize) -> Self {
        let prenet = (0..cfg.prenet_layers)
            .map(|i| {
                let input = if i == 0 { cfg.mel_dim } else { cfg.prenet_units };
                Dense::new(format!("{name}/prenet{i}"), input, cfg.prenet_units)
            })
            .collect();
        let lstms = (0..cfg.lstm_layers)
            .map(|i| {
                let input = if i == 0 { cfg.prenet_units + context_dim } else { cfg.lstm_units };
                Lstm::new(format!("{name}/lstm{i}"), input, cfg.lstm_units)
            })
            .collect();
        let head_in = cfg.lstm_units + context_dim;
        Self {
            mel_dim: cfg.mel_dim,
            prenet,
            prenet_dropout: cfg.prenet_dropout,
            lstms,
            mel_head: Dense::new(format!("{name}/mel_head"), head_in, cfg.mel_dim),
            stop_head: Dense::new(format!("{name}/stop_head"), head_in, 2),
        }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v = Vec::new();
        for d in &self.prenet {
            v.extend(d.specs());
        }
        for l in &self.lstms {
            v.extend(l.specs());
        }
        v.extend(self.mel_head.specs());
        v.extend(self.stop_head.specs());
        v
    }

    pub fn query_dim(&self) -> usize {
        self.prenet.last().map_or(self.mel_dim, |d| d.output)
    }

    pub fn initial_state(&self, g: &mut Graph, attentions: &[GmmAttention]) -> DecoderState {
        DecoderState {
            prev: g.constant(Tensor::zeros(&[1, self.mel_dim])),
            lstm: self.lstms.iter().map(|l| l.zero_state(g, 1)).collect(),
            attention: attentions.iter().map(|a| a.initial_state(g)).collect(),
        }
    }

    pub fn prenet(&self, g: &mut Graph, frame: Var) -> Result<Var> {
        let mut q = frame;
        for d in &self.prenet {
            let y = d.forward(g, q)?;
            let y = g.relu(y)?;
            q = g.dropout(y, self.prenet_dropout)?;
        }
        Ok(q)
    }

    /// One step: pre-net on the previous frame, every attention source, the
    /// summed context, the LSTM stack and both output heads. The returned
    /// state's `prev` is this step's frame; teacher forcing overwrites it.
    pub fn step(
        &self,
        g: &mut Graph,
        state: &DecoderState,
        attentions: &[GmmAttention],
        sources: &[Source],
    ) -> Result<(StepOutput, DecoderState)> {
        if state.attention.len() != attentions.len() || sources.len() != attentions.len() {
            return Err(Error::Mismatch {
                what: "attention sources",
                expected: attentions.len(),
                got: sources.len().min(state.attention.len()),
            });
        }
        if state.lstm.len() != self.lstms.len() {
            return Err(Error::Mismatch { what: "decoder LSTM states", expected: self.lstms.len(), got: state.lstm.len() });
        }
        let q = self.prenet(g, state.prev)?;
        let mut att_states = Vec::with_capacity(attentions.len());
        let mut steps = Vec::with_capacity(attentions.len());
        let mut context: Option<Var> = None;
        for ((att, st), src) in attentions.iter().zip(&state.attention).zip(sources) {
            let (next, info) = att.step(g, q, st, src)?;
            context = Some(match context {
                None => info.context,
                Some(c) => g.add(c, info.context)?,
            });
            att_states.push(next);
            steps.push(info);
        }
        let context = context.ok_or(Error::Mismatch { what: "attention sources", expected: 1, got: 0 })?;
        let mut x = g.concat(&[q, context], 1)?;
        let mut lstm = Vec::with_capacity(self.lstms.len());
        for (cell, s) in self.lstms.iter().zip(&state.lstm) {
            let next = cell.cell(g, x, *s)?;
            x = next.h;
            lstm.push(next);
        }
        let out = g.concat(&[x, context], 1)?;
        let frame = self.mel_head.forward(g, out)?;
        let stop_logits = self.stop_head.forward(g, out)?;
        let next = DecoderState { prev: frame, lstm, attention: att_states };
        Ok((StepOutput { frame, stop_logits, context, attention: steps }, next))
    }
}

/// Residual convolutional refinement: `z = z_pre + PostNet(z_pre)`. Every
/// layer is conv, batch norm and tanh, except the last, which has no tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct Postnet {
    layers: Vec<(Conv1d, BatchNorm)>,
}

impl Postnet {
    pub fn new(name: &str, cfg: &DecoderConfig) -> Self {
        let n = cfg.postnet_layers;
        let layers = (0..n)
            .map(|i| {
                let cin = if i == 0 { cfg.mel_dim } else { cfg.postnet_channels };
                let cout = if i + 1 == n { cfg.mel_dim } else { cfg.postnet_channels };
                (
                    Conv1d::new(format!("{name}/conv{i}"), cin, cout, cfg.postnet_kernel),
                    BatchNorm::new(format!("{name}/bn{i}"), cout),
                )
            })
            .collect();
        Self { layers }
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        self.layers.iter().flat_map(|(c, bn)| c.specs().into_iter().chain(bn.specs())).collect()
    }

    /// Residual prediction for each `[T_i, mel_dim]` sequence.
    pub fn residual(&self, g: &mut Graph, pres: &[Var]) -> Result<Vec<Var>> {
        let mut hs = pres.to_vec();
        for (i, (conv, bn)) in self.layers.iter().enumerate() {
            let ys = hs.iter().map(|&h| conv.forward(g, h)).collect::<tec_grad::Result<Vec<_>>>()?;
            hs = bn.forward_batch(g, &ys)?;
            if i + 1 < self.layers.len() {
                hs = hs.into_iter().map(|h| g.tanh(h)).collect::<tec_grad::Result<_>>()?;
            }
        }
        Ok(hs)
    }

    pub fn forward(&self, g: &mut Graph, pres: &[Var]) -> Result<Vec<Var>> {
        if self.layers.is_empty() {
            return Ok(pres.to_vec());
        }
        let res = self.residual(g, pres)?;
        pres.iter().zip(res).map(|(&p, r)| Ok(g.add(p, r)?)).collect()
    }
}
