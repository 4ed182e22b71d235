//! Inference cost: `m_audio * t_x + m_text * t_y + m_dec * t_z + flops_atten`.

use tec_core::FlopsReport;
use tec_grad::ParamSpec;

use crate::config::ModelConfig;
use crate::error::Result;
use crate::model::Model;

fn count(specs: &[ParamSpec], prefixes: &[&str]) -> u64 {
    specs
        .iter()
        .filter(|s| s.trainable && prefixes.iter().any(|p| s.name.starts_with(&format!("{p}/"))))
        .map(|s| s.numel() as u64)
        .sum()
}

/// Parameter counts include biases and batch-norm scales. The side encoder
/// (text, or playback audio in AEC mode) fills the `m_text` slot with
/// length `t_y`. Attention parameters are costed only through
/// `flops_atten`: the projection matrix times the source length plus the
/// query matrix times `t_z`, per source.
pub fn flops_estimate(cfg: &ModelConfig, t_x: u64, t_y: u64, t_z: u64) -> Result<FlopsReport> {
    let model = Model::new(cfg.clone())?;
    let specs = model.specs();
    let m_audio = count(&specs, &["audio_enc"]);
    let m_text = count(&specs, &["text_enc", "playback_enc"]);
    let m_dec = count(&specs, &["decoder", "postnet"]);
    let flops_atten = model
        .attentions()
        .iter()
        .enumerate()
        .map(|(i, a)| a.source_weight_count() * if i == 0 { t_x } else { t_y } + a.query_weight_count() * t_z)
        .sum();
    Ok(FlopsReport::new(m_audio, m_text, m_dec, t_x, t_y, t_z, flops_atten))
}
