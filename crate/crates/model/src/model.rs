//! The assembled network and its three variants.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tec_grad::{Graph, ParamSpec, ParamStore, Tensor, Var};

use crate::attention::{GmmAttention, Source};
use crate::config::{Mode, ModelConfig};
use crate::decoder::{Decoder, DecoderState, Postnet, StepOutput};
use crate::encoder::{AudioEncoder, TextEncoder};
use crate::error::{Error, Result};
use crate::loss::{compute_loss, stop_targets, LossBreakdown, LossTerms};

/// What the model receives besides the microphone spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub enum SideInput {
    None,
    /// Phoneme ids of the playback's source text.
    Text(Vec<usize>),
    /// Log-Mel spectrogram `[T, mel_dim]` of the playback waveform.
    Playback(Tensor),
}

/// A training example: mixture and target are `[T, mel_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub mixture: Tensor,
    pub side: SideInput,
    pub target: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
enum SideEncoder {
    None,
    Text(TextEncoder),
    Playback(AudioEncoder),
}

/// Encoded attention sources of one input, audio first.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub outputs: Vec<Var>,
    pub sources: Vec<Source>,
}

/// Teacher-forced outputs of one example.
#[derive(Debug, Clone)]
pub struct Forward {
    pub pre: Var,
    pub post: Var,
    pub stop_logits: Var,
    pub steps: Vec<StepOutput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    audio: AudioEncoder,
    side: SideEncoder,
    attentions: Vec<GmmAttention>,
    decoder: Decoder,
    postnet: Postnet,
}

/// Builds the network for `mode`, overriding the configured mode.
pub fn variant_factory(mode: Mode, cfg: &ModelConfig) -> Result<Model> {
    Model::new(cfg.clone().with_mode(mode))
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mel = config.decoder.mel_dim;
        let audio = AudioEncoder::new("audio_enc", &config.audio_enc, mel);
        let side = match config.mode {
            Mode::Tec => SideEncoder::Text(TextEncoder::new("text_enc", &config.text_enc)),
            Mode::Vanilla => SideEncoder::None,
            Mode::AecSeq2seq => SideEncoder::Playback(AudioEncoder::new("playback_enc", &config.audio_enc, mel)),
        };
        let decoder = Decoder::new("decoder", &config.decoder, config.attention.context_dim);
        let a = &config.attention;
        let att = |name: &str, source_dim: usize| {
            GmmAttention::new(name, decoder.query_dim(), source_dim, a.context_dim, a.components, a.min_width)
        };
        let mut attentions = vec![att("attention_audio", audio.output_dim())];
        match &side {
            SideEncoder::None => {}
            SideEncoder::Text(t) => attentions.push(att("attention_text", t.output_dim())),
            SideEncoder::Playback(p) => attentions.push(att("attention_playback", p.output_dim())),
        }
        let postnet = Postnet::new("postnet", &config.decoder);
        Ok(Self { config, audio, side, attentions, decoder, postnet })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn attentions(&self) -> &[GmmAttention] {
        &self.attentions
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn postnet(&self) -> &Postnet {
        &self.postnet
    }

    /// Names of the encoders, audio first.
    pub fn encoder_names(&self) -> Vec<&str> {
        let mut v = vec![self.audio.name.as_str()];
        match &self.side {
            SideEncoder::None => {}
            SideEncoder::Text(t) => v.push(&t.name),
            SideEncoder::Playback(p) => v.push(&p.name),
        }
        v
    }

    pub fn audio_encoder_count(&self) -> usize {
        1 + usize::from(matches!(self.side, SideEncoder::Playback(_)))
    }

    pub fn text_encoder_count(&self) -> usize {
        usize::from(matches!(self.side, SideEncoder::Text(_)))
    }

    pub fn specs(&self) -> Vec<ParamSpec> {
        let mut v = self.audio.specs();
        match &self.side {
            SideEncoder::None => {}
            SideEncoder::Text(t) => v.extend(t.specs()),
            SideEncoder::Playback(p) => v.extend(p.specs()),
        }
        for a in &self.attentions {
            v.extend(a.specs());
        }
        v.extend(self.decoder.specs());
        v.extend(self.postnet.specs());
        v
    }

    pub fn param_count(&self) -> u64 {
        tec_grad::params::count_trainable(&self.specs())
    }

    /// Freshly initialized parameters and buffers.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::from_specs(&self.specs(), &mut rng)?;
        let a = &self.config.attention;
        for (i, att) in self.attentions.iter().enumerate() {
            let step = match (i, &self.side) {
                (0, _) | (_, SideEncoder::Playback(_)) => a.audio_step_init,
                _ => a.text_step_init,
            };
            att.init_bias(&mut store, a.width_init, step)?;
        }
        Ok(store)
    }

    fn check_side(&self, side: &SideInput) -> Result<()> {
        match (&self.side, side) {
            (SideEncoder::None, _) | (SideEncoder::Text(_), SideInput::Text(_)) => Ok(()),
            (SideEncoder::Playback(_), SideInput::Playback(_)) => Ok(()),
            (SideEncoder::Text(_), _) => Err(Error::MissingSideInput { mode: "tec", needed: "phoneme" }),
            (SideEncoder::Playback(_), _) => {
                Err(Error::MissingSideInput { mode: "aec_seq2seq", needed: "playback spectrogram" })
            }
        }
    }

    pub fn encode_audio(&self, g: &mut Graph, x: &Tensor) -> Result<Var> {
        let v = g.constant(x.clone());
        Ok(self.audio.forward(g, &[v])?[0])
    }

    pub fn encode_text(&self, g: &mut Graph, ids: &[usize]) -> Result<Var> {
        match &self.side {
            SideEncoder::Text(t) => Ok(t.forward(g, &[ids])?[0]),
            _ => Err(Error::Config(format!("mode {} has no text encoder", self.mode()))),
        }
    }

    /// Runs the encoders over a batch and prepares every attention source.
    pub fn encode(&self, g: &mut Graph, inputs: &[(&Tensor, &SideInput)]) -> Result<Vec<Encoded>> {
        if inputs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        for (_, side) in inputs {
            self.check_side(side)?;
        }
        let xs: Vec<Var> = inputs.iter().map(|(x, _)| g.constant((*x).clone())).collect();
        let hx = self.audio.forward(g, &xs)?;
        let hside: Option<Vec<Var>> = match &self.side {
            SideEncoder::None => None,
            SideEncoder::Text(t) => {
                let ids: Vec<&[usize]> = inputs
                    .iter()
                    .map(|(_, s)| match s {
                        SideInput::Text(ids) => ids.as_slice(),
                        _ => unreachable!("checked above"),
                    })
                    .collect();
                Some(t.forward(g, &ids)?)
            }
            SideEncoder::Playback(p) => {
                let ps: Vec<Var> = inputs
                    .iter()
                    .map(|(_, s)| match s {
                        SideInput::Playback(m) => g.constant(m.clone()),
                        _ => unreachable!("checked above"),
                    })
                    .collect();
                Some(p.forward(g, &ps)?)
            }
        };
        let mut out = Vec::with_capacity(inputs.len());
        for (i, &h) in hx.iter().enumerate() {
            let mut outputs = vec![h];
            if let Some(hs) = &hside {
                outputs.push(hs[i]);
            }
            let sources =
                outputs.iter().zip(&self.attentions).map(|(&h, a)| a.prepare(g, h)).collect::<Result<Vec<_>>>()?;
            out.push(Encoded { outputs, sources });
        }
        Ok(out)
    }

    pub fn initial_state(&self, g: &mut Graph) -> DecoderState {
        self.decoder.initial_state(g, &self.attentions)
    }

    pub fn decoder_step(&self, g: &mut Graph, state: &DecoderState, enc: &Encoded) -> Result<(StepOutput, DecoderState)> {
        self.decoder.step(g, state, &self.attentions, &enc.sources)
    }

    /// Decodes `target.rows` steps, feeding the ground-truth previous frame.
    pub fn teacher_forced(&self, g: &mut Graph, enc: &Encoded, target: &Tensor) -> Result<(Var, Var, Vec<StepOutput>)> {
        let (t_z, d) = target.dims2();
        if d != self.decoder.mel_dim {
            return Err(Error::Mismatch { what: "target mel bands", expected: self.decoder.mel_dim, got: d });
        }
        if t_z == 0 {
            return Err(Error::InputTooShort { what: "target", min: 1, got: 0 });
        }
        let z = g.constant(target.clone());
        let mut state = self.initial_state(g);
        let mut steps = Vec::with_capacity(t_z);
        for t in 0..t_z {
            let (out, mut next) = self.decoder_step(g, &state, enc)?;
            next.prev = g.slice(z, 0, t, t + 1)?;
            steps.push(out);
            state = next;
        }
        let frames: Vec<Var> = steps.iter().map(|s| s.frame).collect();
        let stops: Vec<Var> = steps.iter().map(|s| s.stop_logits).collect();
        let pre = g.concat(&frames, 0)?;
        let stop = g.concat(&stops, 0)?;
        Ok((pre, stop, steps))
    }

    pub fn postnet_forward(&self, g: &mut Graph, pres: &[Var]) -> Result<Vec<Var>> {
        self.postnet.forward(g, pres)
    }

    /// Teacher-forced forward pass over a batch.
    pub fn forward(&self, g: &mut Graph, batch: &[Example]) -> Result<Vec<Forward>> {
        let inputs: Vec<(&Tensor, &SideInput)> = batch.iter().map(|e| (&e.mixture, &e.side)).collect();
        let encoded = self.encode(g, &inputs)?;
        let mut partial = Vec::with_capacity(batch.len());
        for (enc, ex) in encoded.iter().zip(batch) {
            partial.push(self.teacher_forced(g, enc, &ex.target)?);
        }
        let pres: Vec<Var> = partial.iter().map(|p| p.0).collect();
        let posts = self.postnet_forward(g, &pres)?;
        Ok(partial
            .into_iter()
            .zip(posts)
            .map(|((pre, stop_logits, steps), post)| Forward { pre, post, stop_logits, steps })
            .collect())
    }

    /// Mean over the batch of each example's loss; returns the scalar node
    /// and the averaged breakdown.
    pub fn batch_loss(&self, g: &mut Graph, batch: &[Example]) -> Result<(Var, LossBreakdown)> {
        let fwd = self.forward(g, batch)?;
        let mut terms: Vec<LossTerms> = Vec::with_capacity(batch.len());
        for (f, ex) in fwd.iter().zip(batch) {
            let z = g.constant(ex.target.clone());
            let targets = stop_targets(ex.target.dims2().0);
            terms.push(compute_loss(g, f.pre, f.post, z, f.stop_logits, &targets, self.config.stop_pos_weight)?);
        }
        let per: Vec<LossBreakdown> = terms.iter().map(|t| t.breakdown(g)).collect();
        let mut total = terms[0].total;
        for t in &terms[1..] {
            total = g.add(total, t.total)?;
        }
        let total = g.scale(total, 1.0 / batch.len() as f64)?;
        Ok((total, LossBreakdown::mean(&per)))
    }
}
