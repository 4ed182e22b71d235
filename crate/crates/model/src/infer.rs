use tec_grad::{Graph, ParamStore, Tensor};

use crate::error::Result;
use crate::model::{Model, SideInput};

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    /// Post-net output `[T, mel_dim]`.
    pub mel: Tensor,
    /// Decoder output before the post-net.
    pub pre: Tensor,
    /// Stop probability at each step.
    pub stop_probs: Vec<f64>,
    /// Attention means per step, one `Vec` per source.
    pub kappas: Vec<Vec<Vec<f64>>>,
    /// Decoding hit `max_steps` without a stop decision.
    pub truncated: bool,
}

const INFERENCE_DROPOUT_SEED: u64 = 0x7EC0;

/// Default step budget: `max_steps_per_frame` per encoded audio frame.
pub fn default_max_steps(model: &Model, mixture_frames: usize) -> usize {
    model.config().max_steps_per_frame * crate::encoder::encoded_audio_len(mixture_frames)
}

/// Autoregressive decoding, feeding back each pre-net-side prediction, until
/// the stop probability exceeds the configured threshold. Pre-net dropout
/// stays on, with a fixed mask seed, so repeated calls agree.
pub fn infer(
    model: &Model,
    store: &ParamStore,
    mixture: &Tensor,
    side: &SideInput,
    max_steps: Option<usize>,
) -> Result<Inference> {
    let threshold = model.config().stop_threshold;
    infer_with_stop(model, store, mixture, side, max_steps, |_, p| p > threshold)
}

/// [`infer`] with a caller-supplied stop rule `stop(step, probability)`; the
/// frame of the step that returns `true` is kept.
pub fn infer_with_stop(
    model: &Model,
    store: &ParamStore,
    mixture: &Tensor,
    side: &SideInput,
    max_steps: Option<usize>,
    mut stop: impl FnMut(usize, f64) -> bool,
) -> Result<Inference> {
    let mut g = Graph::inference(store).with_dropout_seed(INFERENCE_DROPOUT_SEED);
    let enc = model.encode(&mut g, &[(mixture, side)])?.remove(0);
    let max_steps = max_steps.unwrap_or_else(|| default_max_steps(model, mixture.dims2().0)).max(1);
    let mut state = model.initial_state(&mut g);
    let mut frames = Vec::new();
    let mut stop_probs = Vec::new();
    let mut kappas = vec![Vec::new(); model.attentions().len()];
    let mut truncated = true;
    for t in 0..max_steps {
        let (out, next) = model.decoder_step(&mut g, &state, &enc)?;
        let logits = g.value(out.stop_logits).data();
        let p = 1.0 / (1.0 + (logits[0] - logits[1]).exp());
        frames.push(out.frame);
        stop_probs.push(p);
        for (k, a) in kappas.iter_mut().zip(&out.attention) {
            k.push(g.value(a.kappa).data().to_vec());
        }
        state = next;
        if stop(t, p) {
            truncated = false;
            break;
        }
    }
    let pre = g.concat(&frames, 0)?;
    let post = model.postnet_forward(&mut g, &[pre])?[0];
    Ok(Inference { mel: g.value(post).clone(), pre: g.value(pre).clone(), stop_probs, kappas, truncated })
}
